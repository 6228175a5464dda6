"""Command-line front end.

Every subcommand prints one report, JSON by default or CSV with
``--format csv``. Exit codes: 0 success, 1 failed hypothesis or failed
verification, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from typing import Sequence

import numpy as np

from . import __version__, _backend
from .boundary import BoundaryError, exponent_integrals, integral_test, parse_boundary
from .bounds import (
    HypothesisError,
    rate_sweep,
    slepian_check,
    survival_lower_bound,
    verify_bound,
)
from .exact import BESSEL_CONSTANT, QUAD_TOL, conditioned_mean, minimal_c_scan, p_const_exact
from .simulate import (
    ConfigError,
    SimConfig,
    bessel_mean,
    estimate_exit_direct,
    estimate_exit_girsanov,
    estimate_novikov_limit,
)

SCHEMA = "movbound.report/1"
DEFAULT_HORIZON = 100.0
# relative accuracy of the closed forms built on libm erf
CLOSED_FORM_TOL = 1e-15

CSV_HEADERS = {
    "classify": ["verdict", "value", "tolerance", "T", "int_fprime_sq", "int_fpp_sqrt", "sqrtT_fprimeT", "quad_tolerance"],
    "exact": ["a", "T", "p", "tolerance"],
    "mean": ["kind", "a", "T", "u", "value", "normalizer", "tolerance"],
    "estimate": ["estimator", "T", "n_paths", "n_steps", "p_hat", "std_err", "effective_sample_size"],
    "bound": ["T", "base_probability", "half_int_fprime_sq", "int_fpp_sqrt", "sqrtT_fprimeT", "c1", "c2", "lower_bound", "p_hat", "std_err", "margin", "passed"],
    "rate": ["row", "T", "p_hat", "std_err", "slope", "intercept", "slope_halfwidth"],
    "novikov": ["quantity", "T", "value", "std_err"],
    "slepian": ["t0", "T", "joint", "early", "late", "product", "std_err", "margin", "passed"],
    "bessel": ["s", "n_paths", "mean", "std_err", "reference"],
}


class _ValidationFailure(Exception):
    """Carries a finished report whose check did not pass."""


# ---------------------------------------------------------------- arg types

def _count(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text!r}")
    return value


def _boundary(text: str):
    try:
        return parse_boundary(text)
    except BoundaryError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _t_grid(text: str) -> list[float]:
    """``a:b:n`` for ``n`` log-spaced horizons, or a comma-separated list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            lo, hi, count = _positive(a), _positive(b), _count(n)
            if count < 2 or hi <= lo:
                raise argparse.ArgumentTypeError(f"need a < b and n >= 2 in {text!r}")
            return [float(T) for T in np.geomspace(lo, hi, count)]
        grid = sorted(_positive(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon grid {text!r}; use a:b:n or T1,T2,...") from None
    if len(set(grid)) != len(grid):
        raise argparse.ArgumentTypeError(f"repeated horizon in {text!r}")
    return grid


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--no-timing", action="store_true",
                        help="report runtime_ms as null so identical runs are byte-identical")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--paths", type=_count, default=100_000)
    mc.add_argument("--steps", type=_count, default=1000)
    mc.add_argument("--seed", type=_seed, default=42)
    mc.add_argument("--no-bridge", action="store_true", help="disable the Brownian-bridge crossing correction")
    mc.add_argument("--chunk-size", type=_count, default=8192)
    mc.add_argument("--threads", type=_count, default=None, help="worker threads (default: MOVBOUND_THREADS or CPU count)")
    mc.add_argument("--backend", choices=("cython", "python"), default=None)

    boundary = argparse.ArgumentParser(add_help=False)
    boundary.add_argument("--boundary", type=_boundary, required=True,
                          help='e.g. "1 - ln(1+t)", "1 + exp(-t)", "1 - 0.5*(1+t)^0.5"')

    parser = argparse.ArgumentParser(prog="movbound", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"movbound {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("classify", parents=[common, boundary], help="integral test and exponent integrals")
    p.add_argument("--T", type=_positive, default=DEFAULT_HORIZON)
    p.add_argument("--tolerance", type=_positive, default=1e-10)

    p = sub.add_parser("exact", parents=[common], help="survival below a constant level")
    p.add_argument("--a", type=_positive, required=True)
    p.add_argument("--T", type=_positive, required=True)

    p = sub.add_parser("mean", parents=[common], help="conditioned mean or minimal-constant scan")
    p.add_argument("--a", type=_positive, required=True)
    p.add_argument("--T", type=_positive, help="horizon for a single conditioned mean")
    p.add_argument("--u", type=_positive, help="time of the conditioned mean (default T)")
    p.add_argument("--scan", type=_t_grid, help="horizons for the minimal-constant scan")
    p.add_argument("--u-points", type=_count, default=50)

    p = sub.add_parser("estimate", parents=[common, boundary, mc], help="Monte Carlo survival probability")
    p.add_argument("--T", type=_positive, default=1.0)
    p.add_argument("--estimator", choices=("direct", "girsanov", "both"), default="direct")

    p = sub.add_parser("bound", parents=[common, boundary, mc], help="explicit lower bound, optionally verified")
    p.add_argument("--T", type=_positive, default=10.0)
    p.add_argument("--c1", type=_positive, default=BESSEL_CONSTANT)
    p.add_argument("--c2", type=_positive, default=BESSEL_CONSTANT)
    p.add_argument("--verify", action="store_true", help="compare with a direct Monte Carlo estimate")

    p = sub.add_parser("rate", parents=[common, boundary, mc], help="survival decay exponent over a horizon grid")
    p.add_argument("--t-grid", type=_t_grid, default=_t_grid("1e2:1e4:5"))
    p.add_argument("--dt", type=_positive, help="fixed time step for every horizon (default: --steps per horizon)")
    p.add_argument("--estimator", choices=("direct", "girsanov"), default="direct")

    p = sub.add_parser("novikov", parents=[common, boundary, mc], help="sqrt(T) P(survive) against sqrt(2/pi) E f(tau)")
    p.add_argument("--t-grid", type=_t_grid, default=_t_grid("1e1:1e3:3"))
    p.add_argument("--dt", type=_positive, help="time step (default: largest horizon / --steps)")

    p = sub.add_parser("slepian", parents=[common, boundary, mc], help="window product inequality")
    p.add_argument("--T", type=_positive, default=10.0)
    p.add_argument("--t0", type=_positive, help="split time (default T/10)")

    p = sub.add_parser("bessel", parents=[common, mc], help="mean modulus of 3-d Brownian motion")
    p.add_argument("--s", type=_positive, default=1.0)
    return parser


# ---------------------------------------------------------------- commands

def _sim_config(args, T: float) -> SimConfig:
    return SimConfig(
        n_paths=args.paths,
        n_steps=args.steps,
        T=T,
        seed=args.seed,
        bridge_correction=not args.no_bridge,
        chunk_size=args.chunk_size,
    )


def _mc_inputs(args) -> dict:
    return {
        "paths": args.paths,
        "steps": args.steps,
        "seed": args.seed,
        "bridge_correction": not args.no_bridge,
        "chunk_size": args.chunk_size,
        "backend": _backend.get(args.backend)[0],
    }


def _cmd_classify(args):
    b = args.boundary
    report = integral_test(b, args.tolerance)
    fp_sq, fpp_sqrt, tail = exponent_integrals(b, args.T)
    out = {
        "verdict": report.verdict,
        "value": report.value,
        "tolerance": report.tolerance_used,
        "T": args.T,
        "int_fprime_sq": fp_sq,
        "int_fpp_sqrt": fpp_sqrt,
        "sqrtT_fprimeT": tail,
        "quad_tolerance": 1e-10,
    }
    inputs = {"boundary": str(b), "T": args.T, "tolerance": args.tolerance}
    return inputs, out, [out]


def _cmd_exact(args):
    p = p_const_exact(args.a, args.T)
    out = {"a": args.a, "T": args.T, "p": p, "tolerance": CLOSED_FORM_TOL}
    return {"a": args.a, "T": args.T}, out, [out]


def _cmd_mean(args):
    inputs = {"a": args.a}
    if args.scan is not None:
        inputs.update(scan=args.scan, u_points=args.u_points)
        rows = []
        for T in args.scan:
            c = minimal_c_scan(args.a, [T], args.u_points)
            rows.append({"kind": "minimal_c", "a": args.a, "T": T, "u": None, "value": c,
                         "normalizer": None, "tolerance": QUAD_TOL})
        overall = max(r["value"] for r in rows)
        rows.append({"kind": "minimal_c_overall", "a": args.a, "T": None, "u": None, "value": overall,
                     "normalizer": None, "tolerance": QUAD_TOL})
        out = {"minimal_c": overall, "per_horizon": rows[:-1], "tolerance": QUAD_TOL,
               "bessel_constant": BESSEL_CONSTANT}
        return inputs, out, rows
    if args.T is None:
        raise _UsageError("mean needs --T (single conditioned mean) or --scan")
    u = args.T if args.u is None else args.u
    if u > args.T:
        raise _UsageError(f"--u must not exceed --T, got u={u}, T={args.T}")
    inputs.update(T=args.T, u=u)
    rep = conditioned_mean(u, args.T, args.a)
    row = {"kind": "conditioned_mean", "a": args.a, "T": args.T, "u": u, "value": rep.mean,
           "normalizer": rep.normalizer, "tolerance": QUAD_TOL}
    out = {"mean": rep.mean, "normalizer": rep.normalizer, "tolerance": QUAD_TOL,
           "minimal_c_observed": rep.minimal_c_observed}
    return inputs, out, [row]


def _estimate_row(est, cfg):
    return {
        "estimator": est.estimator,
        "T": cfg.T,
        "n_paths": est.n_paths,
        "n_steps": cfg.n_steps,
        "p_hat": est.p_hat,
        "std_err": est.std_err,
        "effective_sample_size": est.effective_sample_size,
    }


def _cmd_estimate(args):
    cfg = _sim_config(args, args.T)
    names = ["direct", "girsanov"] if args.estimator == "both" else [args.estimator]
    fns = {"direct": estimate_exit_direct, "girsanov": estimate_exit_girsanov}
    rows = [_estimate_row(fns[n](args.boundary, cfg, args.threads, args.backend), cfg) for n in names]
    inputs = {"boundary": str(args.boundary), "T": args.T, "estimator": args.estimator, **_mc_inputs(args)}
    return inputs, {"estimates": rows}, rows


def _cmd_bound(args):
    b = args.boundary
    inputs = {"boundary": str(b), "T": args.T, "c1": args.c1, "c2": args.c2, "verify": args.verify}
    if args.verify:
        inputs.update(_mc_inputs(args))
        check = verify_bound(b, args.T, _sim_config(args, args.T), args.c1, args.c2, args.threads, args.backend)
        ev = check.bound
        extra = {"p_hat": check.estimate.p_hat, "std_err": check.estimate.std_err,
                 "margin": check.margin, "passed": check.passed}
    else:
        ev = survival_lower_bound(b, args.T, args.c1, args.c2)
        extra = {"p_hat": None, "std_err": None, "margin": None, "passed": None}
    row = {
        "T": ev.T,
        "base_probability": ev.base_probability,
        "half_int_fprime_sq": ev.half_int_fprime_sq,
        "int_fpp_sqrt": ev.int_fpp_sqrt,
        "sqrtT_fprimeT": ev.sqrtT_fprimeT,
        "c1": ev.c1,
        "c2": ev.c2,
        "lower_bound": ev.lower_bound,
        **extra,
    }
    out = dict(row, quad_tolerance=1e-10)
    if extra["passed"] is False:
        raise _ValidationFailure((inputs, out, [row]))
    return inputs, out, [row]


def _cmd_rate(args):
    fit = rate_sweep(args.boundary, args.t_grid, _sim_config(args, args.t_grid[0]), args.dt,
                     args.estimator, args.threads, args.backend)
    rows = [{"row": "point", "T": T, "p_hat": p, "std_err": se, "slope": None, "intercept": None,
             "slope_halfwidth": None} for T, p, se in fit.points]
    rows.append({"row": "fit", "T": None, "p_hat": None, "std_err": None, "slope": fit.slope,
                 "intercept": fit.intercept, "slope_halfwidth": fit.slope_halfwidth})
    out = {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_halfwidth": fit.slope_halfwidth,
        "points": [{"T": T, "p_hat": p, "std_err": se} for T, p, se in fit.points],
    }
    inputs = {"boundary": str(args.boundary), "t_grid": args.t_grid, "dt": args.dt,
              "estimator": args.estimator, **_mc_inputs(args)}
    return inputs, out, rows


def _cmd_novikov(args):
    T_max = max(args.t_grid)
    cfg = _sim_config(args, T_max)
    if args.dt is not None:
        cfg = cfg.at_horizon(T_max, args.dt)
    rep = estimate_novikov_limit(args.boundary, cfg, args.t_grid, args.threads, args.backend)
    n = cfg.n_paths
    censor_se = math.sqrt(rep.censor_fraction * (1 - rep.censor_fraction) / n)
    rows = [{"quantity": "sqrtT_p", "T": T, "value": v, "std_err": se} for T, v, se in rep.points]
    rows += [
        {"quantity": "lhs", "T": rep.T, "value": rep.lhs, "std_err": rep.lhs_std_err},
        {"quantity": "rhs", "T": rep.T, "value": rep.rhs, "std_err": rep.rhs_std_err},
        {"quantity": "censor_fraction", "T": rep.T, "value": rep.censor_fraction, "std_err": censor_se},
    ]
    out = {
        "lhs": rep.lhs,
        "lhs_std_err": rep.lhs_std_err,
        "rhs": rep.rhs,
        "rhs_std_err": rep.rhs_std_err,
        "combined_std_err": rep.combined_std_err,
        "T": rep.T,
        "censor_fraction": rep.censor_fraction,
        "censor_std_err": censor_se,
        "censoring_flagged": rep.censoring_flagged,
        "points": [{"T": T, "value": v, "std_err": se} for T, v, se in rep.points],
    }
    inputs = {"boundary": str(args.boundary), "t_grid": args.t_grid, "dt": cfg.dt, **_mc_inputs(args)}
    return inputs, out, rows


def _cmd_slepian(args):
    t0 = args.T / 10 if args.t0 is None else args.t0
    if not t0 < args.T:
        raise _UsageError(f"--t0 must be below --T, got t0={t0}, T={args.T}")
    rep = slepian_check(args.boundary, t0, args.T, _sim_config(args, args.T), args.threads, args.backend)
    row = {
        "t0": rep.t0,
        "T": rep.T,
        "joint": rep.joint,
        "early": rep.early,
        "late": rep.late,
        "product": rep.product,
        "std_err": rep.std_err,
        "margin": rep.margin,
        "passed": rep.passed,
    }
    inputs = {"boundary": str(args.boundary), "T": args.T, "t0": t0, **_mc_inputs(args)}
    if not rep.passed:
        raise _ValidationFailure((inputs, dict(row), [row]))
    return inputs, dict(row), [row]


def _cmd_bessel(args):
    est = bessel_mean(args.s, _sim_config(args, 1.0), args.threads, args.backend)
    row = {"s": est.s, "n_paths": est.n_paths, "mean": est.mean, "std_err": est.std_err,
           "reference": BESSEL_CONSTANT * math.sqrt(est.s)}
    inputs = {"s": args.s, **_mc_inputs(args)}
    return inputs, dict(row), [row]


COMMANDS = {
    "classify": _cmd_classify,
    "exact": _cmd_exact,
    "mean": _cmd_mean,
    "estimate": _cmd_estimate,
    "bound": _cmd_bound,
    "rate": _cmd_rate,
    "novikov": _cmd_novikov,
    "slepian": _cmd_slepian,
    "bessel": _cmd_bessel,
}


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------- output

def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(command: str, report: dict, rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, allow_nan=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = CSV_HEADERS[command]
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_value(row.get(col)) for col in header])
    return buf.getvalue()


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Run one subcommand; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    old_err = sys.stderr
    sys.stderr = stderr
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    finally:
        sys.stderr = old_err

    start = time.perf_counter()
    code = 0
    try:
        inputs, outputs, rows = COMMANDS[args.command](args)
    except _ValidationFailure as fail:
        inputs, outputs, rows = fail.args[0]
        code = 1
    except HypothesisError as exc:
        print(f"movbound {args.command}: hypothesis failed: {exc}", file=stderr)
        return 1
    except (_UsageError, ConfigError, BoundaryError, ValueError) as exc:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        print(sub.format_usage(), end="", file=stderr)
        print(f"movbound {args.command}: error: {exc}", file=stderr)
        return 2
    runtime = None if args.no_timing else round((time.perf_counter() - start) * 1000.0, 3)
    report = {
        "schema": SCHEMA,
        "command": args.command,
        "version": __version__,
        "inputs": inputs,
        "outputs": outputs,
        "runtime_ms": runtime,
    }
    stdout.write(render(args.command, report, rows, args.format))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
