"""Nonlocal diffusion driven by the fractional operator.

Evolution is exact eigen-expansion propagation (no time stepping): the
exterior-clamped problem decomposes into the steady Poisson solution plus a
homogeneous part decaying through the Dirichlet spectrum.  The free-space
heat kernel comes from the padded Fourier transform, and a one-step free
evolution of the steady state recovers the DN map to first order in time,
which is the dynamical reading of the exterior measurement.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dirichlet import DirichletSystem, dirichlet_spectrum, ensure_solvable, solve_poisson
from .dnmap import dn_pointwise
from .errors import DomainError, ModeMismatchError
from .grid import Grid, GridFunction


class EvolutionMode(Enum):
    HOMOGENEOUS = "homogeneous"     # exterior clamped to zero
    CLAMPED = "clamped"             # exterior clamped to data f


@dataclass
class EvolutionState:
    sys: DirichletSystem
    t: float
    state: GridFunction
    mode: EvolutionMode


def _homogeneous_propagate(sys: DirichletSystem, interior0: np.ndarray, t: float) -> np.ndarray:
    spec = dirichlet_spectrum(sys)
    coeff = spec.eigenvectors.T @ interior0
    return spec.eigenvectors @ (np.exp(-spec.eigenvalues * t) * coeff)


def evolve(sys: DirichletSystem, initial: GridFunction, mode: EvolutionMode,
           t: float, f: np.ndarray = None) -> EvolutionState:
    """Propagate an initial state exactly through the cached eigenbasis."""
    ensure_solvable(sys)
    if t < 0:
        raise DomainError("t must be nonnegative")
    grid = sys.grid
    initial.check_far_zero()
    if mode == EvolutionMode.HOMOGENEOUS:
        ext = initial.values[grid.ext_support]
        if len(ext) and np.max(np.abs(ext)) > 0:
            raise ModeMismatchError("homogeneous evolution requires the initial "
                                    "state to vanish outside the domain")
        out = np.zeros(grid.n_nodes)
        out[grid.interior] = _homogeneous_propagate(sys, initial.values[grid.interior], t)
        return EvolutionState(sys=sys, t=t, state=GridFunction(grid, out), mode=mode)
    if mode == EvolutionMode.CLAMPED:
        if f is None:
            raise ModeMismatchError("clamped evolution requires exterior data f")
        f = np.asarray(f, dtype=float)
        if np.max(np.abs(initial.values[grid.ext_support] - f)) > 0:
            raise ModeMismatchError("initial state must honor the exterior clamp exactly")
        u_f = solve_poisson(sys, f)
        diff0 = initial.values[grid.interior] - u_f.values[grid.interior]
        out = u_f.values.copy()
        out[grid.interior] += _homogeneous_propagate(sys, diff0, t)
        return EvolutionState(sys=sys, t=t, state=GridFunction(grid, out), mode=mode)
    raise ModeMismatchError(f"unknown mode {mode!r}")


def heat_kernel_free(grid: Grid, s: float, t: float, pad_factor: int = 64) -> GridFunction:
    """Free-space heat kernel at time t sampled on the 1D lattice.

    Inverse transform of exp(-t |xi|^(2s)) on the padded frequency lattice;
    mass and tails are truncation-limited and checked by the caller.
    """
    if grid.dim != 1:
        raise DomainError("free heat kernel is implemented on 1D grids")
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    if t <= 0:
        raise DomainError("t must be positive")
    n_cells = int(round(2.0 * grid.R / grid.h))
    M = int(pad_factor) * n_cells
    xi = 2.0 * np.pi * np.fft.fftfreq(M, d=grid.h)
    # cell centers sit at half-integer lattice offsets; evaluate the inverse
    # transform at (m + 1/2) h via a half-sample phase shift
    spec = np.exp(-t * np.abs(xi) ** (2 * s)) * np.exp(1j * xi * grid.h / 2.0)
    vals = np.fft.ifft(spec).real / grid.h
    m_index = np.floor(grid.coords[:, 0] / grid.h).astype(int) % M
    return GridFunction(grid, vals[m_index])


def decay_series(sys: DirichletSystem, initial: GridFunction, f: np.ndarray,
                 times) -> list:
    """(t, distance to steady state) pairs for the clamped evolution."""
    grid = sys.grid
    u_f = solve_poisson(sys, f)
    hn = grid.h ** grid.dim
    rows = []
    for t in times:
        st = evolve(sys, initial, EvolutionMode.CLAMPED, float(t), f=f)
        dist = np.sqrt(hn) * np.linalg.norm(st.state.values - u_f.values)
        rows.append((float(t), float(dist)))
    return rows


def dn_cost_check(sys: DirichletSystem, f: np.ndarray, dt: float = None) -> dict:
    """Short free evolution of the steady state versus the DN readout.

    (f - u(dt))/dt on the exterior support approximates the DN map of f with
    an O(dt) remainder; the deviation halves when dt does.
    """
    ensure_solvable(sys)
    grid = sys.grid
    op = sys.op
    u_f = solve_poisson(sys, f)
    evals, evecs = np.linalg.eigh(op.matrix)
    if dt is None:
        dt = 1e-3 / float(evals[-1])
    coeff = evecs.T @ u_f.values[grid.nonfar]
    evolved = evecs @ (np.exp(-evals * dt) * coeff)
    readout = (np.asarray(f, dtype=float) - evolved[sys.es_pos]) / dt
    dn = dn_pointwise(sys, f)
    scale = float(np.max(np.abs(dn))) if np.max(np.abs(dn)) > 0 else 1.0
    deviation = float(np.max(np.abs(readout - dn)) / scale)
    return {"dt": float(dt), "deviation": deviation, "readout": readout, "dn": dn}


def series_to_csv(rows: list, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,distance\n")
        for t, d in rows:
            fh.write("%.17g,%.17g\n" % (t, d))
