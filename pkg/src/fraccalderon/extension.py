"""Upper-half-space extension machinery (1D base grids).

The extension is built by convolving with the exactly normalized kernel
P_y(x) ~ y^(2s) (x^2 + y^2)^(-(1+2s)/2); cell integrals of P_y have a closed
form through the regularized incomplete beta function, and the weights over
the whole line sum to one identically.  The weighted derivative at the base
recovers the fractional operator; the double-vanishing singular value study
provides a numerical witness that only grid-scale vectors can vanish
together with their operator image on an open set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, LadderError
from .fracop import FracOperator, assemble_quadrature, extension_trace_constant
from .grid import Grid, GridFunction


@dataclass
class ExtensionField:
    grid: Grid
    s: float
    y_levels: np.ndarray
    base: np.ndarray            # boundary values w(x, 0) = u(x), all nodes
    values: np.ndarray          # (node, level)


def kernel_cdf(t: np.ndarray, y: float, s: float) -> np.ndarray:
    """Odd antiderivative of the extension kernel: integral of P_y over [0, t].

    P_y has unit mass, so this tends to 1/2 as t grows.
    """
    t = np.asarray(t, dtype=float)
    z = t * t / (t * t + y * y)
    return 0.5 * np.sign(t) * special.betainc(0.5, s, z)


def poisson_kernel_weights(grid: Grid, s: float, y: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell-integral kernel weights K[i, j] (target i, source cell j) and the
    per-source mass escaping the box; in-box column sums plus the escape add
    to one identically."""
    if grid.dim != 1:
        raise DomainError("extension requires a 1D base grid")
    x = grid.coords[:, 0]
    d = x[:, None] - x[None, :]
    K = kernel_cdf(d + grid.h / 2.0, y, s) - kernel_cdf(d - grid.h / 2.0, y, s)
    lo = -grid.R - x
    hi = grid.R - x
    escape = 1.0 - (kernel_cdf(hi, y, s) - kernel_cdf(lo, y, s))
    return K, escape


def cs_extend(u: GridFunction, s: float, y_levels) -> ExtensionField:
    """Extend a compactly supported grid function to positive levels by
    discrete convolution with the exactly-normalized kernel."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"s must lie in (0, 1), got {s}")
    grid = u.grid
    if grid.dim != 1:
        raise DomainError("extension requires a 1D base grid")
    u.check_far_zero()
    y_levels = np.asarray(y_levels, dtype=float)
    if y_levels.ndim != 1 or len(y_levels) == 0 or np.any(y_levels <= 0) \
            or np.any(np.diff(y_levels) <= 0):
        raise DomainError("y_levels must be strictly increasing and positive")
    vals = np.empty((grid.n_nodes, len(y_levels)))
    for m, y in enumerate(y_levels):
        K, _ = poisson_kernel_weights(grid, s, float(y))
        vals[:, m] = K @ u.values
    return ExtensionField(grid=grid, s=s, y_levels=y_levels, base=u.values.copy(),
                          values=vals)


def default_ladder(h: float, n_levels: int = 8) -> np.ndarray:
    """Geometric level ladder with ratio 2 starting at the grid spacing."""
    return h * 2.0 ** np.arange(n_levels)


def trace_ladder(h: float, n_levels: int = 6) -> np.ndarray:
    """Ladder tuned for trace extrapolation: starts above the cell-scale
    crossover of the discrete kernel, stays below feature scale."""
    return 3.0 * h * 1.3 ** np.arange(n_levels)


def _lattice_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / grid.h**2
    return out


def trace_derivative(field: ExtensionField, s: float) -> GridFunction:
    """Recover the operator from the behavior of the extension at the base.

    The level expansion of w - u splits into integer powers of y (classical
    Laplacian powers of u, with known coefficients) and a y^(2s) series whose
    leading coefficient carries the operator.  The classical part is
    subtracted using lattice Laplacians, and the y^(2s) series is fit on the
    smallest levels; the result is -d_s * 2s times the extrapolated constant.
    """
    if abs(s - field.s) > 0:
        raise DomainError("order s must match the extension field")
    y_all = field.y_levels
    if len(y_all) < 3:
        raise LadderError("need at least 3 levels near zero")
    n_use = min(len(y_all), 6)
    y = y_all[:n_use]
    lap1 = _lattice_laplacian(field.grid, field.base)
    lap2 = _lattice_laplacian(field.grid, lap1)
    classical = (-np.outer(lap1, y**2) / (4.0 * (1.0 - s))
                 + np.outer(lap2, y**4) / (32.0 * (1.0 - s) * (2.0 - s)))
    G = (field.values[:, :n_use] - field.base[:, None] - classical) / y[None, :] ** (2 * s)
    n_terms = 3 if n_use >= 4 else 2
    basis = np.stack([y**e for e in (0.0, 2.0, 4.0)[:n_terms]], axis=1)
    if np.linalg.cond(basis) > 1e12:
        raise LadderError("level ladder too degenerate for extrapolation")
    coef, *_ = np.linalg.lstsq(basis, G.T, rcond=None)
    a = coef[0]
    d_s = extension_trace_constant(s)
    return GridFunction(field.grid, -d_s * 2.0 * s * a)


def frequency_energy_fraction(grid: Grid, values_nonfar: np.ndarray, cutoff: float) -> float:
    """Fraction of spectral energy at frequencies |xi| >= cutoff for a vector
    on the non-FAR nodes (embedded by zero into the box lattice)."""
    full = np.zeros(grid.n_nodes)
    full[grid.nonfar] = values_nonfar
    n_cells = int(round(2.0 * grid.R / grid.h))
    if grid.dim == 1:
        spec = np.fft.fft(full)
        xi = np.abs(2.0 * np.pi * np.fft.fftfreq(n_cells, d=grid.h))
    else:
        spec = np.fft.fft2(full.reshape(n_cells, n_cells)).ravel()
        f1 = 2.0 * np.pi * np.fft.fftfreq(n_cells, d=grid.h)
        xi = np.sqrt(f1[:, None] ** 2 + f1[None, :] ** 2).ravel()
    power = np.abs(spec) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    return float(power[xi >= cutoff].sum() / total)


def ucp_conditioning(grid: Grid, s: float, W, norm_cap: float = None,
                     op: FracOperator = None) -> dict:
    """Conditioning of the double-vanishing constraints on a window.

    Stacks the rows selecting u on W with the operator rows producing
    (A u)|_W, over all non-FAR degrees of freedom, and returns the smallest
    singular value with its minimizing unit vector.  The minimum is tiny
    (near-violations exist at fixed h) but the minimizer is a grid artifact:
    its energy concentrates above the resolvable band.  The complementary
    number ``smooth_sigma_min`` restricts candidates to operator eigenvectors
    with energy at most ``norm_cap`` (default: half-Nyquist energy
    (pi/(4h))^(2s)); for smooth candidates the constraints are far from
    degenerate, which is the discrete residue of the uniqueness property.
    """
    if op is None:
        op = assemble_quadrature(grid, s)
    nodes = grid.indices_of(W) if isinstance(W, str) else np.asarray(W, dtype=np.int64)
    pos = np.full(grid.n_nodes, -1, dtype=np.int64)
    nf = grid.nonfar
    pos[nf] = np.arange(len(nf))
    w_pos = pos[nodes]
    if np.any(w_pos < 0):
        raise DomainError("window must consist of non-FAR nodes")
    sel = np.zeros((len(w_pos), len(nf)))
    sel[np.arange(len(w_pos)), w_pos] = 1.0
    C = np.vstack([sel, op.matrix[w_pos]])

    _, sv, Vt = np.linalg.svd(C, full_matrices=True)
    minimizer = Vt[-1]
    if C.shape[0] >= C.shape[1]:
        sigma_min = float(sv[C.shape[1] - 1])
        sigma_rows = sigma_min
    else:
        # wide stack: exact double-vanishers exist; report the structural zero
        # together with the conditioning of the row functionals
        sigma_min = 0.0
        sigma_rows = float(sv[C.shape[0] - 1])

    if norm_cap is None:
        norm_cap = (np.pi / (4.0 * grid.h)) ** (2.0 * s)
    evals, evecs = np.linalg.eigh(op.matrix)
    keep = evals <= norm_cap
    if np.any(keep):
        V = evecs[:, keep]
        sv_smooth = np.linalg.svd(C @ V, compute_uv=False)
        smooth_sigma_min = float(sv_smooth[-1]) if V.shape[1] <= C.shape[0] else 0.0
        smooth_dim = int(V.shape[1])
    else:
        smooth_sigma_min = float("inf")
        smooth_dim = 0
    return {
        "sigma_min": sigma_min,
        "minimizer": minimizer,
        "singular_values": sv,
        "null_dim": int(max(0, C.shape[1] - C.shape[0])),
        "row_sigma_min": sigma_rows,
        "smooth_sigma_min": smooth_sigma_min,
        "smooth_dim": smooth_dim,
        "norm_cap": float(norm_cap),
        "constraint_rows": int(C.shape[0]),
        "dof": int(C.shape[1]),
    }


def export_field_csv(field: ExtensionField, path: str) -> None:
    """(x, y, w) triples for contour plotting."""
    x = field.grid.coords[:, 0]
    with open(path, "w", newline="") as fh:
        fh.write("x,y,w\n")
        for m, y in enumerate(field.y_levels):
            for i in range(len(x)):
                fh.write("%.17g,%.17g,%.17g\n" % (x[i], y, field.values[i, m]))
