import math

import mpmath
import numpy as np
import pytest

from movbound.exact import (
    BESSEL_CONSTANT,
    conditioned_mean,
    conditioned_mean_at_horizon,
    minimal_c_scan,
    p_const_exact,
    u_grid,
)

SQRT_2_OVER_PI = math.sqrt(2 / math.pi)
# conditioned_mean(1, 1, 1); matches the closed form and the rejection oracle
MEAN_U1_T1_A1 = -0.4647947734915441
# minimal_c_scan(1, [1, 10, 100], 50)
SCAN_A1 = 1.337159996949391


def rejection_mean(u, T, a, n=1_000_000, seed=2024):
    """E[B_u | max_{[0,T]} B <= a] by exact simulation of bridge maxima."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, math.sqrt(u), n)
    m1 = 0.5 * (x + np.sqrt(x * x - 2 * u * np.log(rng.random(n))))
    keep = m1 <= a
    s = T - u
    if s > 0:
        d = rng.normal(0.0, math.sqrt(s), n)
        m2 = x + 0.5 * (d + np.sqrt(d * d - 2 * s * np.log(rng.random(n))))
        keep &= m2 <= a
    sample = x[keep]
    return sample.mean(), sample.std() / math.sqrt(sample.size)


# ----------------------------------------------------------- p_const_exact

@pytest.mark.parametrize(
    "a, T, expected, tol",
    [
        (1.0, 1.0, 0.6826895, 1e-7),
        (1.0, 0.0, 1.0, 0.0),
        (1.0, 1e4, 0.00797885, 1e-4 * 0.00797885),
        (2.0, 10.0, float(mpmath.erf(2 / mpmath.sqrt(20))), 1e-15),
    ],
)
def test_p_const_examples(a, T, expected, tol):
    assert p_const_exact(a, T) == pytest.approx(expected, abs=tol)


def test_p_const_against_high_precision():
    mpmath.mp.dps = 30
    for a in (0.1, 1.0, 7.0):
        for T in (0.01, 1.0, 1e6):
            oracle = float(2 * mpmath.ncdf(a / mpmath.sqrt(T)) - 1)
            assert p_const_exact(a, T) == pytest.approx(oracle, rel=1e-14)


@pytest.mark.parametrize("a, T", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5)])
def test_p_const_domain(a, T):
    with pytest.raises(ValueError):
        p_const_exact(a, T)


def test_p_const_monotone_grid():
    # kept away from erf saturation, where p rounds to exactly 1.0
    a = np.linspace(0.1, 3, 20)
    T = np.geomspace(1.0, 1e3, 20)
    P = np.array([[p_const_exact(ai, Tj) for Tj in T] for ai in a])
    assert np.all(np.diff(P, axis=0) > 0)
    assert np.all(np.diff(P, axis=1) < 0)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_sqrt_T_limit(a):
    T = 1e6
    assert abs(math.sqrt(T) * p_const_exact(a, T) - SQRT_2_OVER_PI * a) < 1e-3 * a


# --------------------------------------------------------- conditioned mean

def test_conditioned_mean_frozen_and_closed_form():
    rep = conditioned_mean(1.0, 1.0, 1.0)
    assert rep.mean == pytest.approx(MEAN_U1_T1_A1, abs=1e-12)
    assert rep.mean == pytest.approx(conditioned_mean_at_horizon(1.0, 1.0), abs=1e-12)
    assert rep.normalizer == pytest.approx(p_const_exact(1.0, 1.0), rel=1e-10)


@pytest.mark.parametrize("u, T, a", [(1.0, 1.0, 1.0), (0.3, 1.0, 1.0), (2.0, 10.0, 0.5), (5.0, 5.0, 3.0)])
def test_conditioned_mean_rejection_oracle(u, T, a):
    mc, se = rejection_mean(u, T, a)
    assert abs(conditioned_mean(u, T, a).mean - mc) < 3 * se


@pytest.mark.parametrize("u, T, a", [(0.3, 1.0, 1.0), (4.0, 10.0, 2.0), (1e-3, 100.0, 1.0)])
def test_normalizer_is_full_survival(u, T, a):
    assert conditioned_mean(u, T, a).normalizer == pytest.approx(p_const_exact(a, T), rel=1e-9)


def test_vacuous_conditioning():
    assert abs(conditioned_mean(1.0, 1.0, 50.0).mean) < 1e-9


def test_small_u_tends_to_zero():
    means = [abs(conditioned_mean(u, 1.0, 1.0).mean) for u in (1e-2, 1e-4, 1e-6)]
    assert means[0] > means[1] > means[2]
    assert means[2] < 1e-3


def test_conditioned_mean_sign_and_monotone_in_a():
    for T in (1.0, 10.0):
        for u in u_grid(T, 8):
            values = [conditioned_mean(float(u), T, a).mean for a in (0.25, 0.5, 1, 2, 4)]
            assert all(v <= 0 for v in values)
            assert all(x <= y + 1e-12 for x, y in zip(values, values[1:]))


@pytest.mark.parametrize("u, T", [(0.0, 1.0), (2.0, 1.0), (-1.0, 1.0)])
def test_conditioned_mean_domain(u, T):
    with pytest.raises(ValueError):
        conditioned_mean(u, T, 1.0)


# ------------------------------------------------------------ constant scan

def test_scan_frozen_and_below_bessel_constant():
    c = minimal_c_scan(1.0, [1.0, 10.0, 100.0], 50)
    assert c == pytest.approx(SCAN_A1, abs=1e-10)
    assert c <= 1.6
    assert c <= BESSEL_CONSTANT


def test_every_grid_point_below_1_6():
    for T in (1.0, 10.0, 100.0):
        for u in u_grid(T, 50):
            assert conditioned_mean(float(u), T, 1.0).minimal_c_observed <= 1.6


def test_scan_large_level_vanishes():
    assert minimal_c_scan(100.0, [1.0], 50) < 1e-12


@pytest.mark.parametrize("lam", [2.0, 3.0, 0.5])
def test_scan_brownian_scaling(lam):
    base = minimal_c_scan(1.0, [1.0, 10.0], 20)
    scaled = minimal_c_scan(lam, [lam**2, 10 * lam**2], 20)
    assert scaled == pytest.approx(base, abs=1e-8)


def test_scan_needs_two_points():
    with pytest.raises(ValueError):
        minimal_c_scan(1.0, [1.0], 1)
