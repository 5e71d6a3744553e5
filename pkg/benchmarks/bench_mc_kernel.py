"""Compare the compiled and numpy path-propagation kernels.

    python3 benchmarks/bench_mc_kernel.py [--paths 200000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from msvou import montecarlo
from msvou.ou_wishart import step_a_params


def bench(backend: str, n_paths: int, repeat: int, T: float) -> tuple[float, np.ndarray]:
    params = step_a_params()
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = montecarlo.simulate(params, T, montecarlo.MCConfig(n_paths, seed=1, backend=backend))
        best = min(best, time.perf_counter() - t0)
        out = res.Y_T
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--maturity", type=float, default=1.0)
    args = ap.parse_args()
    backends = ["numpy"] + (["cython"] if montecarlo.BACKEND == "cython" else [])
    results = {}
    for b in backends:
        results[b] = bench(b, args.paths, args.repeat, args.maturity)
        print(f"{b:>7}: {results[b][0]:.3f} s for {args.paths} paths "
              f"({args.paths / results[b][0]:.3g} paths/s)")
    if len(results) == 2:
        diff = np.max(np.abs(results["numpy"][1] - results["cython"][1]))
        print(f"speedup {results['numpy'][0] / results['cython'][0]:.2f}x, max |dY| = {diff:.2e}")
    else:
        print("compiled kernel not available; only the numpy backend was timed")


if __name__ == "__main__":
    main()
