import numpy as np
import pytest

from fraccalderon.dirichlet import solve_poisson
from fraccalderon.errors import IllConditionedWarning
from fraccalderon.runge import (ControlProblem, adjoint_apply, alpha_sweep,
                                control_to_interior_matrix, runge_approximate,
                                sweep_to_csv)

from conftest import make_grid_1d, window_vector


def test_adjoint_identity(desk_sys_bump):
    # defining property of the adjoint: pairing with every window basis vector
    g = desk_sys_bump.grid
    hn = g.h
    rng = np.random.default_rng(0)
    v = rng.normal(size=len(g.interior))
    adj = adjoint_apply(desk_sys_bump, v, "W1")
    K = control_to_interior_matrix(desk_sys_bump, "W1")
    for k in range(K.shape[1]):
        lhs = hn * float(v @ K[:, k])
        rhs = hn * float(adj[k])
        assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), 1.0)


def test_adjoint_zero(desk_sys0):
    g = desk_sys0.grid
    assert np.all(adjoint_apply(desk_sys0, np.zeros(len(g.interior)), "W1") == 0.0)


def test_stationarity(desk_sys0):
    # at the optimum, adjoint(achieved - target) = -alpha * control
    g = desk_sys0.grid
    target = np.ones(len(g.interior))
    alpha = 1e-6
    res = runge_approximate(ControlProblem(desk_sys0, "W1", target, alpha=alpha))
    lhs = adjoint_apply(desk_sys0, res.achieved - target, "W1")
    rhs = -alpha * res.control
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(np.max(np.abs(rhs)), 1e-12)


def test_target_in_range(desk_sys0):
    g = desk_sys0.grid
    rng = np.random.default_rng(1)
    g0 = rng.normal(size=len(g.windows["W1"]))
    f_es = window_vector(g, "W1", g0)
    target = solve_poisson(desk_sys0, f_es).values[g.interior]
    res = runge_approximate(ControlProblem(desk_sys0, "W1", target, alpha=1e-12))
    rel = res.residual / (np.sqrt(g.h) * np.linalg.norm(target))
    assert rel <= 1e-6


def test_residual_monotone_in_alpha(fine_sys0):
    g = fine_sys0.grid
    target = np.ones(len(g.interior))
    results = alpha_sweep(fine_sys0, "W1", target)
    resids = [r.residual for r in results]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(resids, resids[1:]))


def test_sign_target_regression(fine_sys0):
    # discontinuous target: attainable level at h=0.02 frozen from the sweep
    g = fine_sys0.grid
    target = np.sign(g.coords[g.interior, 0])
    res = runge_approximate(ControlProblem(fine_sys0, "W1", target, alpha=1e-10))
    rel = res.residual / (np.sqrt(g.h) * np.linalg.norm(target))
    assert rel <= 0.40


def test_window_enlargement_helps(fine_sys0):
    g = fine_sys0.grid
    target = np.sign(g.coords[g.interior, 0])
    small = runge_approximate(ControlProblem(fine_sys0, "W1", target, alpha=1e-10))
    wide_grid = make_grid_1d(0.02, windows={
        "W1": {"type": "interval", "bounds": [1.05, 1.95]}})
    from fraccalderon import assemble_quadrature
    from fraccalderon.dirichlet import assemble_system, potential_from_spec
    wide_sys = assemble_system(assemble_quadrature(wide_grid, 0.5),
                               potential_from_spec(wide_grid, 0.0))
    wide = runge_approximate(ControlProblem(
        wide_sys, "W1", np.sign(wide_grid.coords[wide_grid.interior, 0]), alpha=1e-10))
    assert wide.residual <= small.residual


def test_ill_conditioned_warning(desk_sys0):
    g = desk_sys0.grid
    target = np.ones(len(g.interior))
    with pytest.warns(IllConditionedWarning):
        runge_approximate(ControlProblem(desk_sys0, "W1", target, alpha=1e-16))


def test_pinv_fallback(desk_sys0):
    g = desk_sys0.grid
    target = np.ones(len(g.interior))
    res = runge_approximate(ControlProblem(desk_sys0, "W1", target, alpha=0.0))
    assert np.isfinite(res.residual)
    assert res.singular_values is not None


def test_sweep_csv(tmp_path, desk_sys0):
    g = desk_sys0.grid
    results = alpha_sweep(desk_sys0, "W1", np.ones(len(g.interior)),
                          alphas=[1e-4, 1e-6])
    path = tmp_path / "sweep.csv"
    sweep_to_csv(results, str(path))
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (2, 3)
    assert rows[0, 0] == 1e-4


def test_matrix_free_path_matches_dense(desk_sys0, monkeypatch):
    import fraccalderon.runge as runge_mod
    g = desk_sys0.grid
    target = np.ones(len(g.interior))
    dense = runge_approximate(ControlProblem(desk_sys0, "W1", target, alpha=1e-4))
    monkeypatch.setattr(runge_mod, "DENSE_WINDOW_LIMIT", 1)
    mf = runge_approximate(ControlProblem(desk_sys0, "W1", target, alpha=1e-4))
    assert np.max(np.abs(dense.control - mf.control)) <= 1e-9
    assert mf.residual == pytest.approx(dense.residual, rel=1e-9)
