"""Compare the compiled and numpy path-stat kernels on identical inputs.

Run from the repository root:

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --paths 65536 --steps 500

Reports wall time per call (best of --repeats), throughput in
path-steps/s, and the speedup of the compiled extension.  Fails loudly
if the two backends disagree beyond 1e-12 relative.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from asianvol import _kernels_py

try:
    from asianvol import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def check_agreement(a, b) -> float:
    worst = 0.0
    for x, y in zip(a, b):
        err = float(np.max(np.abs(x - y) / np.maximum(np.abs(y), 1e-300)))
        worst = max(worst, err)
    if worst > 1e-12:
        raise SystemExit(f"backends disagree: max rel err {worst:.3e}")
    return worst


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=16384)
    ap.add_argument("--steps", type=int, default=250)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _ckernels is None:
        raise SystemExit("compiled extension not built; nothing to compare")

    rng = np.random.default_rng(args.seed)
    n, m = args.paths, args.steps
    dt = 1.0 / m
    dw = rng.standard_normal((n, m)) * np.sqrt(dt)
    sig = 0.2 + 0.1 * np.abs(np.sin(np.arange(m) / 7.0)) * np.ones((n, 1))
    work = n * m

    print(f"paths={n} steps={m} repeats={args.repeats}")
    print(f"{'kernel':<18} {'backend':<9} {'ms/call':>9} {'Mpath-steps/s':>14}")
    for label, py_fn, c_fn, pyargs in (
        ("path_stats", _kernels_py.path_stats, _ckernels.path_stats, (sig, dw, 10.0, dt)),
        ("path_stats_const", _kernels_py.path_stats_const, _ckernels.path_stats_const, (0.3, dw, 10.0, dt)),
    ):
        out_py = py_fn(*pyargs)
        out_c = c_fn(*pyargs)
        check_agreement(out_c, out_py)
        t_py = best_time(lambda: py_fn(*pyargs), args.repeats)
        t_c = best_time(lambda: c_fn(*pyargs), args.repeats)
        for backend, t in (("python", t_py), ("compiled", t_c)):
            print(
                f"{label:<18} {backend:<9} {1e3 * t:9.2f} {work / t / 1e6:14.1f}"
            )
        print(f"{label:<18} speedup (compiled/python): {t_py / t_c:.2f}x")


if __name__ == "__main__":
    main()
