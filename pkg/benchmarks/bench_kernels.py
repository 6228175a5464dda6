"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--paths N] [--steps N] [--repeat N]

Each case runs on both backends with the same seed; the table reports the best
wall time of ``--repeat`` runs, the speed-up, and whether the two results are
bit-identical.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from movbound import _backend
from movbound.boundary import parse_boundary
from movbound.simulate import (
    SimConfig,
    bessel_mean,
    estimate_exit_direct,
    estimate_exit_girsanov,
    sample_tau,
)


def _cases(paths: int, steps: int):
    log_b = parse_boundary("1 - ln(1+t)")
    const = parse_boundary("1")
    cfg = SimConfig(n_paths=paths, n_steps=steps, T=1.0, seed=7)
    cfg_long = SimConfig(n_paths=paths, n_steps=steps, T=100.0, seed=7)
    return [
        ("direct, f=1, T=1", lambda be: estimate_exit_direct(const, cfg, backend=be).p_hat),
        ("direct, 1-ln(1+t), T=100", lambda be: estimate_exit_direct(log_b, cfg_long, backend=be).p_hat),
        ("girsanov, 1-ln(1+t), T=100", lambda be: estimate_exit_girsanov(log_b, cfg_long, backend=be).p_hat),
        ("first passage, 1-ln(1+t), T=100", lambda be: sample_tau(log_b, cfg_long, backend=be).tau),
        ("bessel mean", lambda be: bessel_mean(1.0, SimConfig(n_paths=paths * 20, seed=7), backend=be).mean),
    ]


def _best_time(fn, repeat: int):
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=20_000)
    parser.add_argument("--steps", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    try:
        _backend.get("cython")
    except RuntimeError:
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation`")

    print(f"paths={args.paths} steps={args.steps} repeat={args.repeat}")
    print(f"{'case':34s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s}  identical")
    for name, fn in _cases(args.paths, args.steps):
        t_c, r_c = _best_time(lambda: fn("cython"), args.repeat)
        t_p, r_p = _best_time(lambda: fn("python"), args.repeat)
        same = bool(np.array_equal(np.asarray(r_c), np.asarray(r_p)))
        print(f"{name:34s} {t_c:10.3f} {t_p:10.3f} {t_p / t_c:9.1f}  {same}")


if __name__ == "__main__":
    main()
