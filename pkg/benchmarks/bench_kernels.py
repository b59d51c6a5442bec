#!/usr/bin/env python3
"""Compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Results are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from iqcgd._kernels import _fallback
from iqcgd.sim import SlopeZigzag

try:
    from iqcgd._kernels import _core
except ImportError:
    _core = None


def _cases():
    rng = np.random.default_rng(0)
    zz = SlopeZigzag(1.0, 10.0)
    steps = 5000
    signs = rng.choice([-1.0, 1.0], size=steps + 1)
    gd = lambda k: k.gd_run_scalar(1, np.zeros(1), zz.breaks, zz.slopes, zz.values, 1.3, 0.0, 0.15, 4, 0.1,
                                   signs, steps, 10.0)
    osc = lambda k: k.gd_run_scalar(2, np.array([1.0, 10.0, 50.0]), np.zeros(1), np.zeros(1), np.zeros(1),
                                    1.3, 0.0, 0.15, 3, 0.1, signs, steps, 10.0)
    sig = rng.standard_normal(20000)
    sums = lambda k: k.rescaled_partial_sums(sig, 0.81)
    a = rng.standard_normal((12, 12))
    a = a + a.T
    jac = lambda k: k.jacobi_eigvalsh(a)
    return [("gd zigzag/greedy 5000 steps", gd), ("gd oscillator/sphere 5000 steps", osc),
            ("rescaled partial sums n=20000", sums), ("jacobi eigvalsh 12x12", jac)]


def _agree(x, y) -> bool:
    if isinstance(x, tuple):
        return all(_agree(p, q) for p, q in zip(x, y))
    return np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rtol=1e-9, atol=1e-300)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        print("compiled backend not built; run `python3 setup.py build_ext --inplace`")
        return
    print(f"{'kernel':34s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, fn in _cases():
        if not _agree(fn(_fallback), fn(_core)):
            raise SystemExit(f"{name}: backends disagree")
        tp = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        print(f"{name:34s} {tp * 1e3:12.3f} {tc * 1e3:14.3f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
