import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma, gammainc

from movbound.boundary import exponent_integrals, parse_boundary, stock_boundaries
from movbound.bounds import (
    HypothesisError,
    check_decreasing_convex,
    fit_rate_exponent,
    rate_sweep,
    slepian_check,
    survival_lower_bound,
    verify_bound,
)
from movbound.exact import BESSEL_CONSTANT, p_const_exact
from movbound.simulate import SimConfig

C = BESSEL_CONSTANT
# survival_lower_bound(1 + exp(-t), T=10) with the default constants
EXP_BOUND_T10 = 0.08954166584073792


def exp_bound_oracle(T, c1, c2):
    half = (1 - math.exp(-2 * T)) / 4
    second = gamma(1.5) * gammainc(1.5, T)
    third = math.sqrt(T) * math.exp(-T)
    return p_const_exact(2, T) * math.exp(-half - c1 * second - c2 * third)


# ----------------------------------------------------------- lower bound

@pytest.mark.parametrize("T", [0.5, 1.0, 100.0, 1e4])
def test_constant_boundary_bound_is_exact(T):
    ev = survival_lower_bound(parse_boundary("1"), T)
    assert ev.lower_bound == p_const_exact(1, T)
    assert ev.exponent_terms == (0.0, 0.0, 0.0)


def test_exp_boundary_bound_against_closed_form():
    ev = survival_lower_bound(parse_boundary("1 + exp(-t)"), 10.0, C, C)
    assert ev.lower_bound == pytest.approx(exp_bound_oracle(10.0, C, C), rel=1e-10)
    assert ev.lower_bound == pytest.approx(EXP_BOUND_T10, rel=1e-12)
    assert ev.base_probability == p_const_exact(2, 10)


def test_log_boundary_bound_in_range():
    ev = survival_lower_bound(parse_boundary("1 - ln(1+t)"), 100.0)
    assert 0 < ev.lower_bound <= p_const_exact(1, 100)
    assert ev.half_int_fprime_sq == pytest.approx(0.5 * (1 - 1 / 101), rel=1e-12)


def test_bound_invariant_formula():
    ev = survival_lower_bound(parse_boundary("1 - ln(1+t)"), 50.0, 0.7, 2.1)
    expected = ev.base_probability * math.exp(
        -ev.half_int_fprime_sq - 0.7 * ev.int_fpp_sqrt - 2.1 * ev.sqrtT_fprimeT
    )
    assert ev.lower_bound == pytest.approx(expected, rel=1e-15)


@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.01, 3))
def test_bound_strictly_monotone_in_constants(c1, c2, bump):
    b = parse_boundary("1 + exp(-t)")
    ev = survival_lower_bound(b, 3.0, c1, c2)
    assert 0 <= ev.lower_bound <= ev.base_probability
    assert survival_lower_bound(b, 3.0, c1 + bump, c2).lower_bound < ev.lower_bound
    assert survival_lower_bound(b, 3.0, c1, c2 + bump).lower_bound < ev.lower_bound


def test_bound_rejects_nonpositive_constants():
    with pytest.raises(ValueError):
        survival_lower_bound(parse_boundary("1"), 1.0, 0.0, 1.0)


@pytest.mark.parametrize("name", ["constant", "log", "exp"])
def test_exponent_converges_in_T(name):
    b = stock_boundaries()[name]
    e4 = survival_lower_bound(b, 1e4).exponent
    e5 = survival_lower_bound(b, 1e5).exponent
    assert abs(e5 - e4) <= 0.01 * abs(e4)


# ------------------------------------------------------- hypothesis check

@pytest.mark.parametrize("text", ["1", "1 - ln(1+t)", "1 + exp(-t)", "1 - 0.5*(1+t)^0.5"])
def test_decreasing_convex_accepted(text):
    check_decreasing_convex(parse_boundary(text), 100.0)


@pytest.mark.parametrize(
    "text, match",
    [("1 + (1+t)^0.25", "f' > 0"), ("1 + ln(1+t)", "f' > 0"), ("2 - exp(-t)", "f' > 0"), ("3 - (1+t)^1.5", "f'' < 0")],
)
def test_decreasing_convex_rejected(text, match):
    with pytest.raises(HypothesisError, match=match):
        check_decreasing_convex(parse_boundary(text), 10.0)


def test_verify_bound_hypothesis_error():
    with pytest.raises(HypothesisError):
        verify_bound(parse_boundary("1 + (1+t)^0.25"), 10.0, SimConfig(n_paths=10))


@pytest.mark.parametrize("text, T", [("1 + exp(-t)", 10.0), ("1 - ln(1+t)", 100.0), ("1", 5.0)])
def test_verify_bound_passes(text, T):
    check = verify_bound(parse_boundary(text), T, SimConfig(n_paths=50_000, n_steps=1000, seed=1))
    assert check.passed and check.margin >= 0
    assert check.margin == pytest.approx(check.estimate.p_hat + 3 * check.estimate.std_err - check.bound.lower_bound)


# ----------------------------------------------------------------- rate fit

@pytest.mark.parametrize("slope", [-2.0, -1.0, -0.5, -0.25])
@pytest.mark.parametrize("with_errors", [True, False])
def test_fit_recovers_power_law(slope, with_errors):
    T = np.geomspace(1e2, 1e4, 5)
    p = 0.3 * T**slope
    se = 0.01 * p if with_errors else np.zeros_like(p)
    fit = fit_rate_exponent(list(zip(T, p, se)))
    assert abs(fit.slope - slope) < 1e-10
    assert fit.intercept == pytest.approx(math.log(0.3), abs=1e-9)
    assert fit.slope_halfwidth > 0


@given(
    st.floats(-3, -0.05),
    st.floats(1e-3, 10),
    st.lists(st.floats(0.5, 1e5), min_size=3, max_size=8, unique=True),
)
def test_fit_exact_power_law_property(slope, c, Ts):
    T = np.array(sorted(Ts))
    if np.any(np.diff(np.log(T)) < 1e-3):
        return
    fit = fit_rate_exponent([(t, c * t**slope, 0.0) for t in T])
    assert abs(fit.slope - slope) < 1e-10


def test_fit_on_exact_constant_boundary_points():
    T = np.geomspace(1e2, 1e4, 5)
    fit = fit_rate_exponent([(t, p_const_exact(1, t), 0.0) for t in T])
    assert -0.51 <= fit.slope <= -0.49
    assert fit.adequate_coverage


def test_fit_weights_follow_relative_error():
    T = [1.0, 10.0, 100.0, 1000.0]
    p = [1.0, 0.1, 0.01, 0.002]
    tight = fit_rate_exponent([(t, q, 1e-9 * q if i < 3 else q) for i, (t, q) in enumerate(zip(T, p))])
    assert tight.slope == pytest.approx(-1.0, abs=1e-6)


@pytest.mark.parametrize(
    "points",
    [
        [(1, 0.5, 0.1), (10, 0.1, 0.01)],
        [(1, 0.5, 0.1), (10, 0.0, 0.01), (100, 0.1, 0.01)],
        [(10, 0.5, 0.1), (1, 0.4, 0.01), (100, 0.1, 0.01)],
    ],
)
def test_fit_rejects_bad_points(points):
    with pytest.raises(ValueError):
        fit_rate_exponent(points)


def test_rate_sweep_constant_boundary():
    fit = rate_sweep(parse_boundary("1"), np.geomspace(1e2, 1e4, 5), SimConfig(n_paths=200_000, seed=7))
    assert abs(fit.slope + 0.5) < 0.03
    assert [pt[0] for pt in fit.points] == pytest.approx(list(np.geomspace(1e2, 1e4, 5)))


def test_rate_sweep_unknown_estimator():
    with pytest.raises(ValueError):
        rate_sweep(parse_boundary("1"), [1, 2, 3], SimConfig(n_paths=10), estimator="magic")


# ------------------------------------------------------------------ slepian

def test_slepian_constant_boundary():
    rep = slepian_check(parse_boundary("1"), 1.0, 10.0, SimConfig(n_paths=200_000, n_steps=1000, seed=3))
    exact = math.erf(1 / math.sqrt(20))
    assert abs(rep.joint - exact) < 4 * math.sqrt(exact * (1 - exact) / 200_000)
    assert rep.passed and rep.margin > 0
    assert rep.product < rep.joint


def test_slepian_log_boundary():
    rep = slepian_check(parse_boundary("1 - ln(1+t)"), 10.0, 100.0, SimConfig(n_paths=100_000, n_steps=1000, seed=4))
    assert rep.passed
    assert rep.t0 == pytest.approx(10.0)


def test_slepian_small_split_is_nearly_tight():
    b = parse_boundary("1 + exp(-t)")
    rep = slepian_check(b, 1e-3, 5.0, SimConfig(n_paths=50_000, n_steps=1000, seed=5))
    assert rep.t0 == pytest.approx(5e-3)
    assert rep.early > 0.999
    assert abs(rep.product - rep.joint) < 3 * rep.std_err + 1e-3


@pytest.mark.parametrize("t0, T", [(0.0, 1.0), (2.0, 1.0), (1.0, 1.0)])
def test_slepian_rejects_bad_split(t0, T):
    with pytest.raises(ValueError):
        slepian_check(parse_boundary("1"), t0, T, SimConfig(n_paths=10))
