"""Time the trajectory kernels under both backends.

The per-step recursion is the only compute-bound loop in the package; this
script runs it over a long horizon with the numba backend and the pure-numpy
twin, checks they produce identical paths, and prints the timings.

Usage: python3 benchmarks/bench_backends.py [--steps N] [--repeats R]
"""

import argparse
import os
import time

import numpy as np

from stoch_h2hinf import NoiseSource, solve_coupled_gare
from stoch_h2hinf._kernels import HAVE_NUMBA, closed_loop_path, forced_path
from stoch_h2hinf.f16 import X0, f16_system


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    sys_, cost = f16_system()
    gains = solve_coupled_gare(sys_, cost, tol=1e-12, max_iters=5000).gains
    omegas = NoiseSource(0).draw(args.steps)
    eu = np.zeros((args.steps, sys_.m1))
    ev = np.zeros((args.steps, sys_.m2))
    vseq = NoiseSource(1).draw(args.steps)[:, None] * np.exp(
        -1e-4 * np.arange(args.steps)
    )[:, None]

    jobs = {
        "closed_loop_path": lambda: closed_loop_path(
            sys_.A1, sys_.B1, sys_.C1, sys_.A2, sys_.C2,
            gains.K1, gains.K2, X0, omegas, eu, ev,
        ),
        "forced_path": lambda: forced_path(
            sys_.A1, sys_.B1, sys_.C1, sys_.A2, sys_.C2,
            gains.K2, X0, vseq, omegas,
        ),
    }

    backends = ["numpy"]
    if HAVE_NUMBA:
        backends.append("numba")
    else:
        print("numba not installed; timing the numpy twin only")

    results = {}
    paths = {}
    for backend in backends:
        os.environ["STOCH_H2HINF_BACKEND"] = backend
        for name, fn in jobs.items():
            fn()  # warm-up (numba compiles here)
            results[(name, backend)] = best_of(fn, args.repeats)
            paths[(name, backend)] = fn()[0]

    if HAVE_NUMBA:
        worst = 0.0
        for name in jobs:
            a, b = paths[(name, "numba")], paths[(name, "numpy")]
            assert np.allclose(a, b, rtol=1e-12, atol=1e-13), f"{name} backends disagree"
            worst = max(worst, np.max(np.abs(a - b)))
        print(f"backends agree over {args.steps} steps (max state gap {worst:.1e})\n")

    width = max(len(n) for n in jobs)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if HAVE_NUMBA:
        header += f"{'speedup':>10}"
    print(header)
    for name in jobs:
        row = f"{name:<{width}}  "
        row += "".join(f"{results[(name, b)] * 1e3:>10.1f}ms" for b in backends)
        if HAVE_NUMBA:
            ratio = results[(name, "numpy")] / results[(name, "numba")]
            row += f"{ratio:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
