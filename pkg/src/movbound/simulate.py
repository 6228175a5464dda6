"""Monte Carlo estimators for survival below a moving boundary.

Paths are split into chunks of ``chunk_size``; chunks run on a thread pool
(the compiled kernels release the GIL) and are reduced in chunk order, so a
result depends only on the seed and the configuration, never on the number
of worker threads.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .boundary import BoundaryFunction, exponent_integrals, integral_test

__all__ = [
    "ConfigError",
    "SimConfig",
    "ExitEstimate",
    "TauSamples",
    "NovikovReport",
    "BesselEstimate",
    "estimate_exit_direct",
    "estimate_exit_girsanov",
    "sample_tau",
    "estimate_novikov_limit",
    "bessel_mean",
    "thread_count",
]

THREADS_ENV = "MOVBOUND_THREADS"
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
CENSORING_FLAG_LEVEL = 0.01


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    n_steps: int = 1000
    T: float = 1.0
    seed: int = 42
    bridge_correction: bool = True
    chunk_size: int = 8192

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def at_horizon(self, T: float, dt: float | None = None) -> "SimConfig":
        """Same config at horizon ``T``; with ``dt`` the step count follows ``T / dt``."""
        if dt is None:
            return replace(self, T=T)
        return replace(self, T=T, n_steps=max(1, math.ceil(T / dt - 1e-9)))


@dataclass(frozen=True)
class ExitEstimate:
    p_hat: float
    std_err: float
    n_paths: int
    estimator: str
    effective_sample_size: float | None = None
    backend: str = ""


@dataclass
class TauSamples:
    """First-passage samples; censored paths carry ``tau = T``."""

    tau: np.ndarray
    f_at_tau: np.ndarray
    censored: np.ndarray
    T: float

    def __len__(self) -> int:
        return self.tau.shape[0]

    @property
    def censor_fraction(self) -> float:
        return float(np.mean(self.censored))


@dataclass
class NovikovReport:
    lhs: float
    lhs_std_err: float
    rhs: float
    rhs_std_err: float
    T: float
    censor_fraction: float
    censoring_flagged: bool
    points: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def combined_std_err(self) -> float:
        return math.hypot(self.lhs_std_err, self.rhs_std_err)


@dataclass(frozen=True)
class BesselEstimate:
    mean: float
    std_err: float
    s: float
    n_paths: int


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "0") or 0) or (os.cpu_count() or 1)
    return max(1, int(threads))


def _chunks(cfg: SimConfig):
    return [
        (start, min(cfg.chunk_size, cfg.n_paths - start))
        for start in range(0, cfg.n_paths, cfg.chunk_size)
    ]


def _map_chunks(fn: Callable, cfg: SimConfig, threads: int | None):
    chunks = _chunks(cfg)
    n_workers = min(thread_count(threads), len(chunks))
    if n_workers == 1:
        return [fn(start, size) for start, size in chunks]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def _mean_and_se(total: float, total_sq: float, n: int) -> tuple[float, float]:
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


def _survival_run(fvals, fpp, cfg, threads, backend, weights):
    name, kern = _backend.get(backend)
    fvals = np.ascontiguousarray(fvals, dtype=float)
    fpp = np.ascontiguousarray(fpp, dtype=float)
    dt = cfg.dt

    def run(start, size):
        return kern.survival_paths(
            fvals, fpp, dt, cfg.seed, start, size, cfg.bridge_correction, weights
        )

    return name, _map_chunks(run, cfg, threads)


def estimate_exit_direct(
    b: BoundaryFunction,
    cfg: SimConfig,
    threads: int | None = None,
    backend: str | None = None,
) -> ExitEstimate:
    """Fraction of simulated paths staying below ``b`` on ``[0, T]``.

    With ``bridge_correction`` each step additionally survives with probability
    ``1 - exp(-2 g_i g_{i+1} / dt)`` (``g`` the gaps to the boundary at the step
    ends); the product over steps is compared with one uniform per path.
    """
    fvals = b.eval(cfg.grid(), 0)
    name, results = _survival_run(fvals, np.empty(0), cfg, threads, backend, False)
    count = sum(int(alive.sum()) for alive, _, _ in results)
    p, se = _mean_and_se(float(count), float(count), cfg.n_paths)
    return ExitEstimate(p, se, cfg.n_paths, "direct", None, name)


def girsanov_log_weights(b: BoundaryFunction, x_T, curvature, T: float, fp_sq_integral: float):
    """Log of ``exp(-f'(T) X_T + int X f'' ds - 1/2 int f'^2 ds)``.

    ``int f' dB`` is replaced by ``f'(T) B_T - int B f'' ds`` so no Ito sum is
    needed.
    """
    return -b.eval(T, 1) * x_T + curvature - 0.5 * fp_sq_integral


def estimate_exit_girsanov(
    b: BoundaryFunction,
    cfg: SimConfig,
    threads: int | None = None,
    backend: str | None = None,
) -> ExitEstimate:
    """Survival probability by removing the drift ``f - f(0)`` with Girsanov.

    Paths are simulated against the constant level ``f(0)``; each survivor is
    weighted by the exponential martingale of the drift, the rest score 0.
    """
    grid = cfg.grid()
    fvals = np.full(grid.shape, b.f0)
    fpp = b.eval(grid, 2)
    weights = not b.is_constant
    name, results = _survival_run(fvals, fpp, cfg, threads, backend, weights)
    fp_sq = exponent_integrals(b, cfg.T)[0]
    logw = np.concatenate(
        [
            girsanov_log_weights(b, x_T[alive == 1], curv[alive == 1], cfg.T, fp_sq)
            for alive, x_T, curv in results
        ]
    )
    if logw.size == 0:
        return ExitEstimate(0.0, 0.0, cfg.n_paths, "girsanov", 0.0, name)
    if not np.all(np.isfinite(logw)):
        raise FloatingPointError("non-finite Girsanov log-weight")
    shift = float(logw.max())
    scaled = np.exp(logw - shift)
    s1 = float(np.sum(scaled))
    s2 = float(np.sum(scaled * scaled))
    scale = math.exp(shift)
    p, se = _mean_and_se(s1 * scale, s2 * scale * scale, cfg.n_paths)
    ess = s1 * s1 / s2
    return ExitEstimate(p, se, cfg.n_paths, "girsanov", ess, name)


def sample_tau(
    b: BoundaryFunction,
    cfg: SimConfig,
    threads: int | None = None,
    backend: str | None = None,
) -> TauSamples:
    """First time each path reaches ``f``, censored at ``T``."""
    name, kern = _backend.get(backend)
    fvals = np.ascontiguousarray(b.eval(cfg.grid(), 0), dtype=float)
    dt = cfg.dt

    def run(start, size):
        return kern.first_passage(fvals, dt, cfg.seed, start, size)

    results = _map_chunks(run, cfg, threads)
    tau = np.concatenate([r[0] for r in results])
    censored = np.concatenate([r[1] for r in results]).astype(bool)
    tau[censored] = cfg.T
    np.minimum(tau, cfg.T, out=tau)
    return TauSamples(tau, b.eval(tau, 0), censored, cfg.T)


def estimate_novikov_limit(
    b: BoundaryFunction,
    cfg: SimConfig,
    T_grid: Sequence[float],
    threads: int | None = None,
    backend: str | None = None,
) -> NovikovReport:
    """Compare ``sqrt(T) P(survive to T)`` with ``sqrt(2/pi) E f(tau)``.

    The time step ``cfg.dt`` is kept across the horizons of ``T_grid``. The
    left side is taken at the largest horizon; the right side averages
    ``f(tau)`` over first passages up to that horizon, censored paths scoring
    ``f(T)``. That substitution biases the right side when many paths are
    censored, so ``censoring_flagged`` is set above 1% censoring.
    """
    report = integral_test(b)
    if not report.converged:
        warnings.warn(
            f"integral test is {report.verdict} for this boundary; the limit may not exist",
            RuntimeWarning,
            stacklevel=2,
        )
    T_grid = sorted(float(T) for T in T_grid)
    dt = cfg.dt
    points = []
    for T in T_grid:
        est = estimate_exit_direct(b, cfg.at_horizon(T, dt), threads, backend)
        root = math.sqrt(T)
        points.append((T, root * est.p_hat, root * est.std_err))
    T_max = T_grid[-1]
    taus = sample_tau(b, cfg.at_horizon(T_max, dt), threads, backend)
    values = taus.f_at_tau
    rhs = SQRT_2_OVER_PI * float(np.mean(values))
    rhs_se = SQRT_2_OVER_PI * float(np.std(values)) / math.sqrt(len(values))
    frac = taus.censor_fraction
    return NovikovReport(
        lhs=points[-1][1],
        lhs_std_err=points[-1][2],
        rhs=rhs,
        rhs_std_err=rhs_se,
        T=T_max,
        censor_fraction=frac,
        censoring_flagged=frac > CENSORING_FLAG_LEVEL,
        points=points,
    )


def bessel_mean(
    s: float,
    cfg: SimConfig,
    threads: int | None = None,
    backend: str | None = None,
) -> BesselEstimate:
    """Mean modulus of three-dimensional Brownian motion at time ``s``."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s!r}")
    name, kern = _backend.get(backend)

    def run(start, size):
        z = kern.normal_block(cfg.seed, start, size, 3, 3)
        return math.sqrt(s) * np.sqrt(np.einsum("ij,ij->i", z, z))

    r = np.concatenate(_map_chunks(run, cfg, threads))
    mean, se = _mean_and_se(float(r.sum()), float((r * r).sum()), r.shape[0])
    return BesselEstimate(mean, se, s, cfg.n_paths)
