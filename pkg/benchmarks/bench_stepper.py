"""Benchmark the compiled DDE stepper against the pure-Python fallback.

Runs the same closed-loop integration through both backends on a
synthetic stable delay system and reports wall time per call plus the
max-norm gap between the two solutions.

Usage:
    python3 benchmarks/bench_stepper.py [--n 12] [--delays 3] [--T 10]
        [--dt 1e-3] [--repeat 3]
"""

import argparse
import time

import numpy as np

from delayhinf import _stepper_py

try:
    from delayhinf import _stepper
except ImportError:
    _stepper = None


def make_problem(n, n_delays, T, dt, seed):
    rng = np.random.default_rng(seed)
    a0 = -2.0 * np.eye(n) + 0.3 * rng.standard_normal((n, n))
    ad = 0.2 * rng.standard_normal((n_delays, n, n))
    taus = 0.1 * (1.0 + np.arange(n_delays))
    b_w = rng.standard_normal((n, 2))
    steps = int(round(T / dt))
    w = rng.standard_normal((steps + 1, 2))
    return a0, ad, taus, b_w, w


def time_backend(run_steps, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = run_steps(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=12, help="state dimension")
    parser.add_argument("--delays", type=int, default=3, help="number of delays")
    parser.add_argument("--T", type=float, default=10.0, help="horizon in seconds")
    parser.add_argument("--dt", type=float, default=1e-3, help="step size")
    parser.add_argument("--repeat", type=int, default=3, help="timing repeats")
    parser.add_argument("--seed", type=int, default=0)
    opts = parser.parse_args()

    a0, ad, taus, b_w, w = make_problem(opts.n, opts.delays, opts.T, opts.dt, opts.seed)
    args = (a0, ad, taus, b_w, w, opts.dt)
    steps = w.shape[0] - 1
    print(f"n={opts.n} delays={opts.delays} steps={steps} dt={opts.dt:g}")

    t_py, out_py = time_backend(_stepper_py.run_steps, args, opts.repeat)
    print(f"python   {t_py:10.4f} s/call")
    if _stepper is None:
        print("compiled backend not built; skipping comparison")
        return
    t_c, out_c = time_backend(_stepper.run_steps, args, opts.repeat)
    gap = max(
        np.max(np.abs(out_py[0] - out_c[0])), np.max(np.abs(out_py[1] - out_c[1]))
    )
    print(f"compiled {t_c:10.4f} s/call")
    print(f"speedup  {t_py / t_c:10.1f} x")
    print(f"max gap  {gap:10.3e}")


if __name__ == "__main__":
    main()
