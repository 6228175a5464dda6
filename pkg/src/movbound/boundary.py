"""Moving boundaries built from a closed family of analytic terms.

A boundary is a finite sum of

* constants ``c``,
* shifted powers ``c*(1+t)^g``,
* shifted logarithms ``c*ln(1+t)``,
* decaying exponentials ``c*exp(-l*t)`` with ``l > 0``,

so the first and second derivatives are available in closed form and are
continuous on ``[0, inf)``.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "BoundaryError",
    "BoundarySyntaxError",
    "BoundaryDomainError",
    "BoundaryRateError",
    "BoundaryTerm",
    "BoundaryFunction",
    "IntegralReport",
    "parse_boundary",
    "render_boundary",
    "evaluate",
    "integral_test",
    "tail_integral_test",
    "exponent_integrals",
]

TERM_KINDS = ("constant", "power", "logarithmic", "exponential")


class BoundaryError(ValueError):
    """Base class for invalid boundary expressions."""


class BoundarySyntaxError(BoundaryError):
    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        pointer = " " * position + "^"
        super().__init__(f"{message} at position {position}\n  {text}\n  {pointer}")


class BoundaryDomainError(BoundaryError):
    """The boundary does not start strictly above the origin."""


class BoundaryRateError(BoundaryError):
    """An exponential term has a non-positive decay rate."""


@dataclass(frozen=True)
class BoundaryTerm:
    kind: str
    coefficient: float
    exponent_or_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise BoundaryError(f"unknown term kind {self.kind!r}")
        if self.kind == "exponential" and not self.exponent_or_rate > 0:
            raise BoundaryRateError(
                f"exponential term needs a positive decay rate, got {self.exponent_or_rate!r}"
            )

    def eval(self, t, order: int = 0):
        c, g = self.coefficient, self.exponent_or_rate
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, c if order == 0 else 0.0)
        if self.kind == "power":
            if order == 0:
                return c * (1.0 + t) ** g
            if order == 1:
                return c * g * (1.0 + t) ** (g - 1.0)
            return c * g * (g - 1.0) * (1.0 + t) ** (g - 2.0)
        if self.kind == "logarithmic":
            if order == 0:
                return c * np.log1p(t)
            if order == 1:
                return c / (1.0 + t)
            return -c / (1.0 + t) ** 2
        # exponential
        e = np.exp(-g * t)
        if order == 0:
            return c * e
        if order == 1:
            return -c * g * e
        return c * g * g * e

    def render(self) -> str:
        c = abs(self.coefficient)
        if self.kind == "constant":
            return repr(c)
        if self.kind == "power":
            return f"{c!r}*(1+t)^{self.exponent_or_rate!r}"
        if self.kind == "logarithmic":
            return f"{c!r}*ln(1+t)"
        return f"{c!r}*exp(-{self.exponent_or_rate!r}*t)"


@dataclass(frozen=True)
class BoundaryFunction:
    terms: tuple[BoundaryTerm, ...]
    source_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        f0 = self.f0
        if not f0 > 0:
            raise BoundaryDomainError(f"boundary must satisfy f(0) > 0, got f(0) = {f0!r}")

    @property
    def f0(self) -> float:
        return float(sum(term.eval(0.0) for term in self.terms))

    def eval(self, t, order: int = 0):
        """Return f, f' or f'' at ``t`` (scalar or array, ``t >= 0``)."""
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order!r}")
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ValueError("boundary is only defined for t >= 0")
        out = np.zeros_like(t_arr)
        for term in self.terms:
            out = out + term.eval(t_arr, order)
        if out.ndim == 0:
            return float(out)
        return out

    __call__ = eval

    def __mul__(self, factor: float) -> "BoundaryFunction":
        terms = tuple(
            BoundaryTerm(term.kind, factor * term.coefficient, term.exponent_or_rate)
            for term in self.terms
        )
        return BoundaryFunction(terms, f"{factor!r}*({self.source_text})")

    __rmul__ = __mul__

    @property
    def is_constant(self) -> bool:
        return all(term.kind == "constant" for term in self.terms)

    def __str__(self) -> str:
        return render_boundary(self)


def evaluate(b: BoundaryFunction, t, order: int = 0):
    return b.eval(t, order)


def render_boundary(b: BoundaryFunction) -> str:
    """Canonical text form; ``parse_boundary(render_boundary(b))`` has the same terms."""
    parts = []
    for i, term in enumerate(b.terms):
        neg = math.copysign(1.0, term.coefficient) < 0
        if i == 0:
            parts.append(("-" if neg else "") + term.render())
        else:
            parts.append((" - " if neg else " + ") + term.render())
    return "".join(parts)


# ---------------------------------------------------------------------------
# Parser
#
#   expr   := ["+"|"-"] term (("+"|"-") term)*
#   term   := number | [number "*"] factor
#   factor := "(1+t)^" number | "ln(1+t)" | "exp(" "-" [number "*"] "t" ")"
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        # keep a map from compacted positions back to the original text
        self.chars = []
        self.pos_map = []
        for i, ch in enumerate(text):
            if not ch.isspace():
                self.chars.append(ch)
                self.pos_map.append(i)
        self.s = "".join(self.chars)
        self.i = 0
        split = re.search(r"[\d.]\s+[\d.]", text)
        if split:
            # whitespace may separate tokens but not split a number
            raise BoundarySyntaxError("space inside a number", text, split.end() - 1)

    def error(self, message: str):
        pos = self.pos_map[self.i] if self.i < len(self.pos_map) else len(self.text)
        raise BoundarySyntaxError(message, self.text, pos)

    def peek(self, literal: str) -> bool:
        return self.s.startswith(literal, self.i)

    def expect(self, literal: str):
        if not self.peek(literal):
            self.error(f"expected {literal!r}")
        self.i += len(literal)

    def number(self, signed: bool = False) -> float:
        m = _NUMBER.match(self.s, self.i)
        if m is None or (not signed and m.group(0)[0] in "+-"):
            self.error("expected a number")
        self.i = m.end()
        return float(m.group(0))

    def factor(self, coefficient: float) -> BoundaryTerm:
        if self.peek("(1+t)^"):
            self.i += len("(1+t)^")
            return BoundaryTerm("power", coefficient, self.number(signed=True))
        if self.peek("ln(1+t)"):
            self.i += len("ln(1+t)")
            return BoundaryTerm("logarithmic", coefficient)
        if self.peek("exp("):
            self.i += len("exp(")
            self.expect("-")
            if self.peek("t"):
                rate = 1.0
            else:
                rate = self.number(signed=True)
                self.expect("*")
            self.expect("t")
            self.expect(")")
            return BoundaryTerm("exponential", coefficient, rate)
        self.error("expected '(1+t)^', 'ln(1+t)' or 'exp('")

    def term(self, sign: float) -> BoundaryTerm:
        if _NUMBER.match(self.s, self.i) and not self.s[self.i] in "+-":
            c = self.number()
            if self.peek("*"):
                self.i += 1
                return self.factor(sign * c)
            return BoundaryTerm("constant", sign * c)
        return self.factor(sign)

    def parse(self) -> list[BoundaryTerm]:
        if not self.s:
            self.error("empty expression")
        sign = 1.0
        if self.peek("-") or self.peek("+"):
            sign = -1.0 if self.s[self.i] == "-" else 1.0
            self.i += 1
        terms = [self.term(sign)]
        while self.i < len(self.s):
            ch = self.s[self.i]
            if ch not in "+-":
                self.error("expected '+' or '-'")
            self.i += 1
            terms.append(self.term(-1.0 if ch == "-" else 1.0))
        return terms


def parse_boundary(expr: str) -> BoundaryFunction:
    """Parse a boundary expression such as ``"1 - ln(1+t)"``.

    Raises
    ------
    BoundarySyntaxError
        The text does not match the grammar; the message points at the
        offending character.
    BoundaryRateError
        An exponential term has decay rate ``<= 0``.
    BoundaryDomainError
        The parsed boundary has ``f(0) <= 0``.
    """
    terms = _Parser(expr).parse()
    return BoundaryFunction(tuple(terms), expr)


# ---------------------------------------------------------------------------
# Integral test
# ---------------------------------------------------------------------------

CONVERGENT = "convergent"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"

MAX_DOUBLINGS = 40
DIVERGENCE_CAP = 1e6
DECAY_WINDOW = 10
DECAY_FACTOR = 0.99


@dataclass
class IntegralReport:
    verdict: str
    value: float
    partial_values: list[tuple[float, float]] = field(default_factory=list)
    tail_corrected: list[tuple[float, float]] = field(default_factory=list)
    tolerance_used: float = 0.0

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGENT


def _sign_changes(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> list[float]:
    t = np.linspace(lo, hi, 65)
    v = g(t)
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    return [0.5 * (t[i] + t[i + 1]) for i in idx]


def _quad(fn, lo, hi, epsabs, epsrel, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _err = integrate.quad(
            fn, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=200, points=points or None
        )
    return val


def tail_integral_test(
    g: Callable[[np.ndarray], np.ndarray], tolerance: float = 1e-10
) -> IntegralReport:
    """Decide whether ``int_1^inf |g(t)| t^{-3/2} dt`` is finite.

    Partial integrals are taken over ``[1, U]`` with ``U = 2, 4, ..., 2**40``.
    Once the per-doubling increments have shrunk by a factor below 0.99 over
    the last ten doublings, the remaining tail ``int_U^inf`` is evaluated after
    the substitution ``t = s**-2`` (which maps it onto ``(0, U**-1/2]``) and the
    tail-corrected estimates are compared between doublings.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")

    def integrand(t):
        return abs(float(g(t))) * t ** -1.5

    def tail(upper):
        # int_U^inf |g(t)| t^{-3/2} dt  ==  int_0^{U^-1/2} 2 |g(s^-2)| ds
        def h(s):
            s = max(s, 1e-150)
            return 2.0 * abs(float(g(1.0 / (s * s))))

        return _quad(h, 0.0, upper ** -0.5, epsabs=0.1 * tolerance, epsrel=1e-12)

    report = IntegralReport(INCONCLUSIVE, math.nan, tolerance_used=tolerance)
    increments: list[float] = []
    total = 0.0
    lo = 1.0
    geometric = False
    for k in range(1, MAX_DOUBLINGS + 1):
        hi = 2.0 ** k
        kinks = _sign_changes(lambda t: np.asarray(g(t), dtype=float), lo, hi)
        inc = _quad(integrand, lo, hi, epsabs=0.01 * tolerance, epsrel=1e-12, points=kinks)
        increments.append(inc)
        total += inc
        report.partial_values.append((hi, total))
        lo = hi
        if total > DIVERGENCE_CAP:
            report.verdict = DIVERGENT
            return report
        if len(increments) <= DECAY_WINDOW:
            continue
        recent = increments[-DECAY_WINDOW - 1 :]
        ratios = [
            (b / a) if a > 0 else (0.0 if b == 0 else math.inf)
            for a, b in zip(recent[:-1], recent[1:])
        ]
        geometric = all(r < DECAY_FACTOR for r in ratios)
        if not geometric:
            continue
        corrected = total + tail(hi)
        report.tail_corrected.append((hi, corrected))
        if len(report.tail_corrected) >= 2:
            prev = report.tail_corrected[-2][1]
            if abs(corrected - prev) < tolerance:
                report.verdict = CONVERGENT
                report.value = corrected
                return report
    report.verdict = INCONCLUSIVE if geometric else DIVERGENT
    return report


def integral_test(b: BoundaryFunction, tolerance: float = 1e-10) -> IntegralReport:
    """Integral test ``int_1^inf |f(t)| t^{-3/2} dt < inf`` for a boundary."""
    return tail_integral_test(lambda t: b.eval(t, 0), tolerance)


def _geometric_panels(T: float) -> list[float]:
    edges = [0.0]
    x = 1.0
    while x < T:
        edges.append(x)
        x *= 2.0
    edges.append(T)
    return edges


def exponent_integrals(
    b: BoundaryFunction, T: float, rel_tol: float = 1e-10
) -> tuple[float, float, float]:
    """Return ``(int_0^T f'^2 ds, int_0^T |f''| sqrt(s) ds, sqrt(T) |f'(T)|)``."""
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T!r}")
    if b.is_constant:
        return 0.0, 0.0, 0.0

    def fp_sq(s):
        return b.eval(s, 1) ** 2

    def fpp_sqrt(s):
        return abs(b.eval(s, 2)) * math.sqrt(s)

    edges = _geometric_panels(T)
    first = second = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        first += _quad(fp_sq, lo, hi, epsabs=0.0, epsrel=rel_tol)
        second += _quad(fpp_sqrt, lo, hi, epsabs=0.0, epsrel=rel_tol)
    third = math.sqrt(T) * abs(b.eval(T, 1))
    return first, second, third


def stock_boundaries() -> dict[str, BoundaryFunction]:
    """Boundaries used throughout the test-suite and CLI examples."""
    return {
        "constant": parse_boundary("1"),
        "log": parse_boundary("1 - ln(1+t)"),
        "exp": parse_boundary("1 + exp(-1*t)"),
        "sqrt": parse_boundary("1 - 0.5*(1+t)^0.5"),
    }

