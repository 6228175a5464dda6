"""Explicit lower bound, rate-exponent fitting and the window product check.

The lower bound for a decreasing convex boundary is

    P(B_t <= f(t), t <= T) >= p_const(f(0), T)
        * exp(-1/2 int f'^2 - c1 int |f''| sqrt(s) - c2 sqrt(T) |f'(T)|)

with both constants defaulting to 2 sqrt(2/pi), the mean modulus of a
standard three-dimensional normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _backend
from .boundary import BoundaryFunction, exponent_integrals
from .exact import BESSEL_CONSTANT, p_const_exact
from .simulate import (
    ExitEstimate,
    SimConfig,
    _map_chunks,
    estimate_exit_direct,
    estimate_exit_girsanov,
)

__all__ = [
    "HypothesisError",
    "BoundEvaluation",
    "BoundVerification",
    "RateFit",
    "SlepianReport",
    "survival_lower_bound",
    "check_decreasing_convex",
    "verify_bound",
    "fit_rate_exponent",
    "rate_sweep",
    "slepian_check",
    "HYPOTHESIS_SAMPLES",
    "CONFIDENCE_Z",
]

HYPOTHESIS_SAMPLES = 1000
CONFIDENCE_Z = 1.96
SIGMAS = 3.0


class HypothesisError(ValueError):
    """The boundary is not decreasing and convex on the horizon."""


@dataclass(frozen=True)
class BoundEvaluation:
    T: float
    base_probability: float
    half_int_fprime_sq: float
    int_fpp_sqrt: float
    sqrtT_fprimeT: float
    c1: float
    c2: float
    lower_bound: float

    @property
    def exponent_terms(self) -> tuple[float, float, float]:
        return self.half_int_fprime_sq, self.int_fpp_sqrt, self.sqrtT_fprimeT

    @property
    def exponent(self) -> float:
        return (
            self.half_int_fprime_sq
            + self.c1 * self.int_fpp_sqrt
            + self.c2 * self.sqrtT_fprimeT
        )


@dataclass(frozen=True)
class BoundVerification:
    bound: BoundEvaluation
    estimate: ExitEstimate
    margin: float
    passed: bool


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_halfwidth: float
    points: list[tuple[float, float, float]] = field(default_factory=list)

    @property
    def decades(self) -> float:
        return math.log10(self.points[-1][0] / self.points[0][0])

    @property
    def adequate_coverage(self) -> bool:
        """At least four horizons spanning two decades."""
        return len(self.points) >= 4 and self.decades >= 2.0 - 1e-12


@dataclass(frozen=True)
class SlepianReport:
    t0: float
    T: float
    joint: float
    early: float
    late: float
    product: float
    std_err: float
    margin: float
    passed: bool


def survival_lower_bound(
    b: BoundaryFunction,
    T: float,
    c1: float = BESSEL_CONSTANT,
    c2: float = BESSEL_CONSTANT,
) -> BoundEvaluation:
    """Explicit lower bound on the survival probability up to ``T``."""
    if not (c1 > 0 and c2 > 0):
        raise ValueError(f"c1 and c2 must be positive, got {c1!r}, {c2!r}")
    fp_sq, fpp_sqrt, tail = exponent_integrals(b, T)
    base = p_const_exact(b.f0, T)
    half = 0.5 * fp_sq
    lower = base * math.exp(-(half + c1 * fpp_sqrt + c2 * tail))
    return BoundEvaluation(T, base, half, fpp_sqrt, tail, c1, c2, lower)


def check_decreasing_convex(b: BoundaryFunction, T: float, n: int = HYPOTHESIS_SAMPLES) -> None:
    """Raise ``HypothesisError`` unless ``f' <= 0`` and ``f'' >= 0`` on ``n`` grid points."""
    t = np.linspace(0.0, T, n)
    d1 = b.eval(t, 1)
    d2 = b.eval(t, 2)
    bad = np.nonzero(d1 > 0.0)[0]
    if bad.size:
        i = bad[0]
        raise HypothesisError(f"f' > 0 at t={t[i]:.6g} (f'={d1[i]:.6g}); boundary must be non-increasing")
    bad = np.nonzero(d2 < 0.0)[0]
    if bad.size:
        i = bad[0]
        raise HypothesisError(f"f'' < 0 at t={t[i]:.6g} (f''={d2[i]:.6g}); boundary must be convex")


def verify_bound(
    b: BoundaryFunction,
    T: float,
    cfg: SimConfig,
    c1: float = BESSEL_CONSTANT,
    c2: float = BESSEL_CONSTANT,
    threads: int | None = None,
    backend: str | None = None,
) -> BoundVerification:
    """Check ``p_hat + 3 std_err >= lower bound`` by direct simulation to ``T``."""
    check_decreasing_convex(b, T)
    bound = survival_lower_bound(b, T, c1, c2)
    est = estimate_exit_direct(b, cfg.at_horizon(T), threads, backend)
    margin = est.p_hat + SIGMAS * est.std_err - bound.lower_bound
    return BoundVerification(bound, est, margin, margin >= 0.0)


def fit_rate_exponent(points: Sequence[tuple[float, float, float]]) -> RateFit:
    """Weighted least squares of ``ln p`` on ``ln T`` with weights ``(p / se)^2``.

    If any standard error is zero the fit falls back to ordinary least squares
    and the half-width comes from the residuals.
    """
    pts = [(float(T), float(p), float(se)) for T, p, se in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points for a rate fit, got {len(pts)}")
    T, p, se = (np.array(col) for col in zip(*pts))
    if np.any(p <= 0):
        raise ValueError("all probabilities must be positive")
    if np.any(np.diff(T) <= 0) or T[0] <= 0:
        raise ValueError("horizons must be positive and strictly increasing")
    x = np.log(T)
    y = np.log(p)
    weighted = bool(np.all(se > 0))
    w = (p / se) ** 2 if weighted else np.ones_like(x)
    xbar = np.sum(w * x) / np.sum(w)
    ybar = np.sum(w * y) / np.sum(w)
    dx = x - xbar
    sxx = np.sum(w * dx * dx)
    slope = float(np.sum(w * dx * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    if weighted:
        slope_se = math.sqrt(1.0 / sxx)
    else:
        resid = y - (intercept + slope * x)
        slope_se = math.sqrt(float(np.sum(resid * resid)) / (len(x) - 2) / sxx)
    halfwidth = max(CONFIDENCE_Z * slope_se, np.finfo(float).eps)
    return RateFit(slope, intercept, halfwidth, pts)


def rate_sweep(
    b: BoundaryFunction,
    T_grid: Sequence[float],
    cfg: SimConfig,
    dt: float | None = None,
    estimator: str = "direct",
    threads: int | None = None,
    backend: str | None = None,
) -> RateFit:
    """Estimate survival at each horizon and fit the decay exponent.

    With ``dt`` every horizon uses that step, so the discretisation bias is
    nearly the same at every horizon and largely cancels from the slope;
    otherwise each horizon uses ``cfg.n_steps`` steps.
    """
    estimators = {"direct": estimate_exit_direct, "girsanov": estimate_exit_girsanov}
    if estimator not in estimators:
        raise ValueError(f"unknown estimator {estimator!r}")
    points = []
    for T in sorted(float(T) for T in T_grid):
        est = estimators[estimator](b, cfg.at_horizon(T, dt), threads, backend)
        points.append((T, est.p_hat, est.std_err))
    return fit_rate_exponent(points)


def slepian_check(
    b: BoundaryFunction,
    t0: float,
    T: float,
    cfg: SimConfig,
    threads: int | None = None,
    backend: str | None = None,
) -> SlepianReport:
    """Check ``P(survive [0,T]) >= P(survive [0,t0]) P(survive [t0,T])``.

    All three probabilities come from the same simulated paths; the late
    window is the full path's indicator restricted to ``[t0, T]``. ``t0`` is
    snapped to the nearest grid point. The error of ``product - joint`` is
    the delta-method standard error, which accounts for the shared paths.
    """
    if not 0 < t0 < T:
        raise ValueError(f"need 0 < t0 < T, got t0={t0!r}, T={T!r}")
    run_cfg = cfg.at_horizon(T)
    dt = run_cfg.dt
    split = min(max(int(round(t0 / dt)), 1), run_cfg.n_steps - 1) if run_cfg.n_steps > 1 else 0
    name, kern = _backend.get(backend)
    fvals = np.ascontiguousarray(b.eval(run_cfg.grid(), 0), dtype=float)

    def run(start, size):
        return kern.window_survival(
            fvals, dt, split, run_cfg.seed, start, size, run_cfg.bridge_correction
        )

    results = _map_chunks(run, run_cfg, threads)
    early = np.concatenate([r[0] for r in results]).astype(float)
    late = np.concatenate([r[1] for r in results]).astype(float)
    joint = early * late
    n = early.shape[0]
    p_e, p_l, p_j = early.mean(), late.mean(), joint.mean()
    product = p_e * p_l
    influence = p_l * early + p_e * late - joint
    se = float(np.std(influence) / math.sqrt(n))
    margin = p_j + SIGMAS * se - product
    return SlepianReport(
        t0=split * dt,
        T=T,
        joint=float(p_j),
        early=float(p_e),
        late=float(p_l),
        product=float(product),
        std_err=se,
        margin=float(margin),
        passed=bool(margin >= 0.0),
    )
