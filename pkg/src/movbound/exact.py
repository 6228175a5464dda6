"""Closed-form and quadrature quantities for a constant level ``a``.

Everything here is deterministic. The conditioned mean uses the Markov
property at time ``u``: the path must stay below ``a`` on ``[0, u]``
(reflection density) and then on ``[u, T]`` starting from ``B_u = x``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "BESSEL_CONSTANT",
    "ConditionedMeanReport",
    "p_const_exact",
    "conditioned_mean",
    "conditioned_mean_at_horizon",
    "minimal_c_scan",
]

# E|N(0, I_3)|: mean modulus of a standard three-dimensional normal vector
BESSEL_CONSTANT = 2.0 * math.sqrt(2.0 / math.pi)

QUAD_TOL = 1e-10
TRUNCATION_SDS = 12.0


def p_const_exact(a: float, T: float) -> float:
    """``P(sup_{t<=T} B_t <= a) = 2 Phi(a / sqrt(T)) - 1``."""
    if not a > 0:
        raise ValueError(f"level a must be positive, got {a!r}")
    if not T >= 0:
        raise ValueError(f"horizon T must be non-negative, got {T!r}")
    if T == 0:
        return 1.0
    return math.erf(a / math.sqrt(2.0 * T))


@dataclass(frozen=True)
class ConditionedMeanReport:
    u: float
    T: float
    a: float
    mean: float
    normalizer: float
    minimal_c_observed: float


def _sub_max_density(x, u, a):
    # phi_u(x) - phi_u(2a - x), written to stay accurate as x -> a
    z = x / math.sqrt(u)
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi * u) * -np.expm1(-2.0 * a * (a - x) / u)


def _survive_from(x, s, a):
    if s == 0:
        return np.ones_like(x)
    return special.erf((a - x) / math.sqrt(2.0 * s))


def _quad(fn, lo, hi, points):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(fn, lo, hi, epsabs=1e-15, epsrel=QUAD_TOL, limit=400, points=points)
    return val


def conditioned_mean(u: float, T: float, a: float) -> ConditionedMeanReport:
    """``E[B_u | sup_{t<=T} B_t <= a]`` by one-dimensional quadrature.

    The integration range is ``[-12 sqrt(u), min(a, 12 sqrt(u))]``: outside it
    the density of ``B_u`` is below ``exp(-72)`` relative to its peak.
    """
    if not a > 0:
        raise ValueError(f"level a must be positive, got {a!r}")
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T!r}")
    if not 0 < u <= T:
        raise ValueError(f"need 0 < u <= T, got u={u!r}, T={T!r}")

    s = T - u
    su = math.sqrt(u)
    lo = -TRUNCATION_SDS * su
    hi = min(a, TRUNCATION_SDS * su)
    marks = [0.0] + [k * su for k in (-6, -3, -1, 1, 3)]
    if s > 0:
        marks += [a - k * math.sqrt(s) for k in (0.5, 2, 6)]
    points = sorted({p for p in marks if lo < p < hi})

    def weight(x):
        return _sub_max_density(x, u, a) * _survive_from(np.asarray(x), s, a)

    den = _quad(weight, lo, hi, points)
    num = _quad(lambda x: x * weight(x), lo, hi, points)
    mean = num / den
    return ConditionedMeanReport(u, T, a, mean, den, max(0.0, -mean / su))


def conditioned_mean_at_horizon(T: float, a: float) -> float:
    """Closed form of ``E[B_T | sup_{t<=T} B_t <= a]``.

    Integrating ``x (phi(x) - phi(2a - x))`` over ``x <= a`` gives
    ``-2 a (1 - Phi(a))`` in units of ``sqrt(T)``.
    """
    z = a / math.sqrt(T)
    upper_tail = 0.5 * math.erfc(z / math.sqrt(2.0))
    return -2.0 * a * upper_tail / math.erf(z / math.sqrt(2.0))


def u_grid(T: float, n: int) -> np.ndarray:
    """``n`` log-spaced times from ``T/1000`` up to ``T``."""
    return T * np.geomspace(1e-3, 1.0, n)


def minimal_c_scan(a: float, T_grid: Sequence[float], u_per_T: int = 50) -> float:
    """Largest ``-E[B_u | sup <= a] / sqrt(u)`` seen over the scanned grid."""
    if u_per_T < 2:
        raise ValueError("u_per_T must be at least 2")
    worst = 0.0
    for T in T_grid:
        for u in u_grid(float(T), u_per_T):
            worst = max(worst, conditioned_mean(float(u), float(T), a).minimal_c_observed)
    return worst
