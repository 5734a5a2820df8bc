"""Compare the compiled and pure-Python RK4 kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--steps 200000] [--repeat 3]

Both kernels integrate the regime-1(b) model from the default start and
must produce identical samples; the script reports steps per second and
the speed-up of the compiled kernel.
"""

import argparse
import time

import numpy as np

from pllident import _pykernels
from pllident.config import bundled_regime


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    dp = bundled_regime("1b").params()
    call = (dp.eps1, dp.eps2, dp.gamma, 0.0, 0.1, 0.0, 1e-3, args.steps, 0, 1)

    kernels = {"python": _pykernels.rk4_integrate}
    try:
        from pllident import _kernels
    except ImportError:
        print("compiled kernel not built; only the fallback is timed")
    else:
        kernels["cython"] = _kernels.rk4_integrate

    results = {}
    for name, fn in kernels.items():
        seconds, (samples, failed) = best_time(lambda: fn(*call), args.repeat)
        assert failed == -1
        results[name] = (seconds, samples)
        print(f"{name:>7}: {seconds:8.4f} s  {args.steps / seconds:12.0f} steps/s")

    if len(results) == 2:
        (tp, sp), (tc, sc) = results["python"], results["cython"]
        print(f"speed-up: {tp / tc:.1f}x, max sample difference {np.max(np.abs(sp - sc)):.1e}")


if __name__ == "__main__":
    main()
