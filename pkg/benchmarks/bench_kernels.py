"""Timing comparison of the assembly hot kernel: numba jit vs numpy fallback.

The pairwise kernel-weight matrix is the only O(N^2) inner loop; everything
downstream is dense linear algebra.  Run directly:

    python benchmarks/bench_kernels.py [--sizes 1000 2000 4000]

Backend selection inside one process is fixed at import time, so this script
re-executes itself with FRACCALDERON_BACKEND set per backend.
"""

import argparse
import json
import os
import subprocess
import sys
import time


def time_backend(backend: str, sizes) -> dict:
    env = dict(os.environ, FRACCALDERON_BACKEND=backend)
    code = f"""
import json, time
import numpy as np
from fraccalderon._kernels import backend_name, midpoint_weight_matrix

rng = np.random.default_rng(0)
out = {{"backend": backend_name(), "timings": {{}}}}
for n in {list(sizes)}:
    side = int(np.ceil(np.sqrt(n)))
    idx = np.stack(np.meshgrid(np.arange(side), np.arange(side), indexing="ij"),
                   axis=-1).reshape(-1, 2)[:n].astype(np.int64)
    midpoint_weight_matrix(idx[:64], 0.05, 3.0)   # warm the jit cache
    reps = []
    for _ in range(3):
        t0 = time.perf_counter()
        W = midpoint_weight_matrix(idx, 0.05, 3.0)
        reps.append(time.perf_counter() - t0)
    out["timings"][str(n)] = min(reps)
    out.setdefault("checksums", {{}})[str(n)] = float(W.sum())
print(json.dumps(out))
"""
    res = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", nargs="+", type=int, default=[1000, 2000, 4000])
    args = parser.parse_args()

    results = {}
    for backend in ("numpy", "numba"):
        try:
            results[backend] = time_backend(backend, args.sizes)
        except subprocess.CalledProcessError as exc:
            print(f"{backend}: unavailable ({exc.stderr.strip().splitlines()[-1]})")

    print(f"{'nodes':>8} {'numpy [s]':>12} {'numba [s]':>12} {'speedup':>9}")
    for n in args.sizes:
        t_np = results.get("numpy", {}).get("timings", {}).get(str(n))
        t_nb = results.get("numba", {}).get("timings", {}).get(str(n))
        if t_np and t_nb:
            c_np = results["numpy"]["checksums"][str(n)]
            c_nb = results["numba"]["checksums"][str(n)]
            drift = abs(c_np - c_nb) / max(abs(c_np), 1e-300)
            print(f"{n:>8} {t_np:>12.4f} {t_nb:>12.4f} {t_np / t_nb:>8.1f}x"
                  f"   (checksum drift {drift:.1e})")
        else:
            print(f"{n:>8} {t_np or float('nan'):>12.4f} {'-':>12}")


if __name__ == "__main__":
    main()
