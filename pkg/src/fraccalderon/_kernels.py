"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the environment:

* ``FRACCALDERON_BACKEND=numba``  force the jit path (error if unavailable),
* ``FRACCALDERON_BACKEND=numpy``  force the vectorized fallback,
* unset / ``auto``                numba when importable, numpy otherwise.

``FRACCALDERON_THREADS`` caps the numba thread pool.  Both paths produce
exactly symmetric matrices: an entry depends only on the squared integer
lattice offset, which is computed identically for (i, j) and (j, i).
"""

import os

import numpy as np

__all__ = ["backend_name", "midpoint_weight_matrix"]


def _midpoint_weights_numpy(idx: np.ndarray, h: float, power: float) -> np.ndarray:
    """Midpoint-rule kernel weights |x_i - x_j|^(-power) on a uniform lattice.

    ``idx`` holds integer lattice multi-indices, shape (n, dim).  Entries for
    the diagonal and for adjacent cells (Chebyshev offset <= 1) are left at
    zero; they get exact cell integrals elsewhere.
    """
    n = idx.shape[0]
    out = np.zeros((n, n))
    # cap the broadcast temporaries at ~128 MB
    block = max(1, (1 << 24) // max(n, 1))
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        di = idx[r0:r1, None, :] - idx[None, :, :]
        far = np.abs(di).max(axis=2) > 1
        d2 = np.einsum("ijk,ijk->ij", di, di).astype(np.float64) * (h * h)
        with np.errstate(divide="ignore"):
            w = d2 ** (-0.5 * power)
        out[r0:r1] = np.where(far, w, 0.0)
    return out


_BACKEND = os.environ.get("FRACCALDERON_BACKEND", "auto").strip().lower() or "auto"
if _BACKEND not in ("auto", "numba", "numpy"):
    raise ValueError(f"FRACCALDERON_BACKEND must be 'numba' or 'numpy', got {_BACKEND!r}")

_midpoint_weights_numba = None
if _BACKEND in ("auto", "numba"):
    try:
        import numba

        _threads = os.environ.get("FRACCALDERON_THREADS")
        if _threads:
            numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))

        @numba.njit(parallel=True, cache=True)
        def _midpoint_weights_numba(idx, h, power):  # pragma: no cover - jitted
            n = idx.shape[0]
            dim = idx.shape[1]
            out = np.zeros((n, n))
            for i in numba.prange(n):
                for j in range(i + 1, n):
                    mx = 0
                    d2 = 0.0
                    for k in range(dim):
                        dk = idx[i, k] - idx[j, k]
                        if dk < 0:
                            dk = -dk
                        if dk > mx:
                            mx = dk
                        d2 += dk * dk
                    if mx <= 1:
                        continue
                    w = (d2 * h * h) ** (-0.5 * power)
                    out[i, j] = w
                    out[j, i] = w
            return out

    except ImportError:
        if _BACKEND == "numba":
            raise
        _midpoint_weights_numba = None


def backend_name() -> str:
    return "numpy" if _midpoint_weights_numba is None else "numba"


def midpoint_weight_matrix(idx: np.ndarray, h: float, power: float) -> np.ndarray:
    """Symmetric matrix of midpoint kernel weights; zero on/next to the diagonal."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if _midpoint_weights_numba is not None:
        return _midpoint_weights_numba(idx, float(h), float(power))
    return _midpoint_weights_numpy(idx, float(h), float(power))
