import numpy as np
import pytest

from fraccalderon.dirichlet import (Potential, assemble_system, check_condition,
                                    dirichlet_spectrum, potential_from_spec,
                                    solve_poisson, solve_source)
from fraccalderon.errors import DomainError, SingularSystemError

from conftest import make_grid_1d, window_vector

# Converged first Dirichlet eigenvalue for q = 0, s = 1/2 on (-1, 1):
# Richardson extrapolation of this assembly at h in {0.04, 0.02, 0.01}
# gives 1.15774 (observed first-order rate in h).
LAMBDA1_CONVERGED = 1.158


def test_lambda1_value(fine_sys0):
    lam1 = dirichlet_spectrum(fine_sys0).eigenvalues[0]
    assert lam1 == pytest.approx(LAMBDA1_CONVERGED, rel=0.02)


def test_spectrum_invariants(desk_sys_bump):
    spec = dirichlet_spectrum(desk_sys_bump)
    w, v = spec.eigenvalues, spec.eigenvectors
    assert np.all(np.diff(w) >= 0)
    scale = np.max(np.abs(w))
    resid = np.max(np.abs(desk_sys_bump.interior_matrix @ v - v * w))
    assert resid <= 1e-10 * scale
    assert np.max(np.abs(v.T @ v - np.eye(len(w)))) <= 1e-12
    q_minus = np.max(np.clip(-desk_sys_bump.potential.values, 0, None))
    assert w[0] > -q_minus


def test_constant_shift_is_exact(desk_op):
    g = desk_op.grid
    s0 = assemble_system(desk_op, potential_from_spec(g, 0.0))
    s3 = assemble_system(desk_op, potential_from_spec(g, 3.0))
    w0 = dirichlet_spectrum(s0).eigenvalues
    w3 = dirichlet_spectrum(s3).eigenvalues
    assert np.allclose(w3, w0 + 3.0, rtol=0, atol=1e-11 * np.max(np.abs(w3)))


def test_nonnegative_q_always_solvable(desk_op):
    g = desk_op.grid
    rng = np.random.default_rng(11)
    for _ in range(5):
        q = Potential(g, rng.uniform(0.0, 3.0, size=len(g.interior)))
        sys = assemble_system(desk_op, q)
        chk = check_condition(sys)
        assert chk["ok"]
        assert dirichlet_spectrum(sys).eigenvalues[0] > 0


def test_check_condition_cases(desk_op, desk_sys0):
    g = desk_op.grid
    assert check_condition(desk_sys0)["ok"]
    lam1 = dirichlet_spectrum(desk_sys0).eigenvalues[0]
    resonant = assemble_system(desk_op, potential_from_spec(g, -float(lam1)))
    assert not check_condition(resonant)["ok"]
    with pytest.raises(SingularSystemError):
        solve_poisson(resonant, np.zeros(len(g.ext_support)))
    shifted = assemble_system(desk_op, potential_from_spec(g, 1.0))
    assert check_condition(shifted)["margin"] >= 1.0


def test_solve_poisson_basics(desk_sys0):
    g = desk_sys0.grid
    zero = solve_poisson(desk_sys0, np.zeros(len(g.ext_support)))
    assert np.all(zero.values == 0.0)
    rng = np.random.default_rng(2)
    f1 = rng.normal(size=len(g.ext_support))
    f2 = rng.normal(size=len(g.ext_support))
    a, b = 0.7, -2.3
    lin = solve_poisson(desk_sys0, a * f1 + b * f2).values
    sup = a * solve_poisson(desk_sys0, f1).values + b * solve_poisson(desk_sys0, f2).values
    assert np.allclose(lin, sup, atol=1e-12 * max(np.max(np.abs(sup)), 1))
    # exterior data honored exactly
    u = solve_poisson(desk_sys0, f1)
    assert np.max(np.abs(u.values[g.ext_support] - f1)) == 0.0
    assert np.all(u.values[g.far] == 0.0)


def test_poisson_positivity(desk_sys0):
    g = desk_sys0.grid
    f = window_vector(g, "W1", 1.0)
    u = solve_poisson(desk_sys0, f)
    assert np.min(u.values[g.interior]) > 0.0


def test_solve_source_basics(desk_sys0):
    g = desk_sys0.grid
    assert np.all(solve_source(desk_sys0, np.zeros(len(g.interior))).values == 0.0)
    spec = dirichlet_spectrum(desk_sys0)
    phi1 = spec.eigenvectors[:, 0]
    u = solve_source(desk_sys0, phi1)
    assert np.allclose(u.values[g.interior], phi1 / spec.eigenvalues[0], atol=1e-13)
    rng = np.random.default_rng(3)
    F1 = rng.normal(size=len(g.interior))
    F2 = rng.normal(size=len(g.interior))
    lhs = float(solve_source(desk_sys0, F1).values[g.interior] @ F2)
    rhs = float(F1 @ solve_source(desk_sys0, F2).values[g.interior])
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_well_posedness_estimate(desk_sys_bump):
    g = desk_sys_bump.grid
    rng = np.random.default_rng(4)
    margin = check_condition(desk_sys_bump)["margin"]
    coupling_norm = np.linalg.norm(desk_sys_bump.coupling, 2)
    for _ in range(3):
        f = rng.normal(size=len(g.ext_support))
        F = rng.normal(size=len(g.interior))
        u_int = solve_source(desk_sys_bump, F).values[g.interior] \
            + solve_poisson(desk_sys_bump, f).values[g.interior]
        bound = (np.linalg.norm(F) + coupling_norm * np.linalg.norm(f)) / margin
        assert np.linalg.norm(u_int) <= bound * (1 + 1e-12)


def test_potential_families():
    g = make_grid_1d(0.05)
    x = g.coords[g.interior, 0]
    p = potential_from_spec(g, {"type": "gaussian", "amplitude": 2.0, "center": 0.5, "width": 0.3})
    assert p.values.argmax() == np.argmin(np.abs(x - 0.5))
    assert p.sup_norm == pytest.approx(2.0, rel=1e-2)
    p2 = potential_from_spec(g, {"type": "two_bump", "bumps": [
        {"amplitude": 1.0, "center": -0.5, "width": 0.2},
        {"amplitude": 1.0, "center": 0.5, "width": 0.2}]})
    assert p2.values[np.argmin(np.abs(x + 0.5))] > 0.9
    p3 = potential_from_spec(g, {"type": "nodes", "values": list(range(len(x)))})
    assert p3.values[-1] == len(x) - 1
    with pytest.raises(DomainError):
        potential_from_spec(g, {"type": "mystery"})
    with pytest.raises(ValueError):
        Potential(g, np.ones(3))


def test_potential_from_csv(tmp_path):
    from fraccalderon.dirichlet import potential_from_csv
    g = make_grid_1d(0.05)
    path = tmp_path / "q.csv"
    path.write_text("index,value\n0,1.5\n5,-0.25\n")
    p = potential_from_csv(g, str(path))
    assert p.values[0] == 1.5
    assert p.values[5] == -0.25
    assert np.count_nonzero(p.values) == 2
