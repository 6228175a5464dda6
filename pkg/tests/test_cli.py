import csv
import io
import json
import subprocess
import sys

import pytest

from movbound import __version__
from movbound.cli import CSV_HEADERS, SCHEMA, run


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def invoke_json(*argv):
    code, out, err = invoke(*argv)
    assert code == 0, err
    return json.loads(out)


def invoke_csv(*argv):
    code, out, err = invoke(*argv, "--format", "csv")
    assert code == 0, err
    rows = list(csv.reader(io.StringIO(out)))
    return rows[0], rows[1:]


def test_classify_log_boundary():
    rep = invoke_json("classify", "--boundary", "1 - ln(1+t)")
    assert rep["schema"] == SCHEMA and rep["version"] == __version__ and rep["command"] == "classify"
    assert rep["outputs"]["verdict"] == "convergent"
    assert rep["outputs"]["int_fprime_sq"] == pytest.approx(1 - 1 / 101)
    assert rep["inputs"]["T"] == 100.0


def test_domain_violation_is_usage_error():
    code, out, err = invoke("classify", "--boundary", "0 - ln(1+t)")
    assert code == 2 and out == ""
    assert "f(0) > 0" in err and "--boundary" in err and "usage: movbound classify" in err


@pytest.mark.parametrize(
    "argv, flag",
    [
        (["estimate", "--boundary", "1", "--paths", "1.5"], "--paths"),
        (["estimate", "--boundary", "1 +"], "--boundary"),
        (["exact", "--a", "1"], "--T"),
        (["rate", "--boundary", "1", "--t-grid", "1e4:1e2:5"], "--t-grid"),
        (["estimate", "--boundary", "1", "--seed", "-3"], "--seed"),
        (["frobnicate"], "command"),
    ],
)
def test_usage_errors_name_the_flag(argv, flag):
    code, _, err = invoke(*argv)
    assert code == 2
    assert flag in err and "usage:" in err


def test_semantic_usage_error_shows_synopsis():
    code, _, err = invoke("slepian", "--boundary", "1", "--T", "1", "--t0", "2", "--paths", "10")
    assert code == 2 and "usage: movbound slepian" in err and "t0" in err


def test_exact_subcommand():
    rep = invoke_json("exact", "--a", "1", "--T", "1")
    assert rep["outputs"]["p"] == pytest.approx(0.6826895, abs=1e-7)
    assert "tolerance" in rep["outputs"]


def test_mean_subcommands():
    rep = invoke_json("mean", "--a", "1", "--T", "1")
    assert rep["outputs"]["mean"] == pytest.approx(-0.4647947734915441, abs=1e-12)
    header, rows = invoke_csv("mean", "--a", "1", "--scan", "1,10,100")
    assert header == CSV_HEADERS["mean"]
    assert float(rows[-1][header.index("value")]) <= 1.6


def test_bound_hypothesis_failure_exit_code():
    code, out, err = invoke("bound", "--boundary", "1 + (1+t)^0.25", "--verify", "--paths", "100")
    assert code == 1 and "f' > 0" in err


def test_bound_verify_report():
    rep = invoke_json("bound", "--boundary", "1 + exp(-t)", "--T", "10", "--verify", "--paths", "20000")
    out = rep["outputs"]
    assert out["passed"] is True
    assert out["lower_bound"] == pytest.approx(0.08954166584073792, rel=1e-12)
    assert out["p_hat"] + 3 * out["std_err"] >= out["lower_bound"]


def test_bound_failed_verification_exit_code():
    # absurdly small constants make the "bound" exceed the true probability
    code, out, _ = invoke("bound", "--boundary", "1 - ln(1+t)", "--T", "100", "--c1", "1e-9", "--c2", "1e-9",
                          "--verify", "--paths", "20000", "--no-timing")
    rep = json.loads(out)
    assert code == 1 and rep["outputs"]["passed"] is False


def test_estimate_both_and_csv_json_agree():
    args = ["estimate", "--boundary", "1 - ln(1+t)", "--T", "5", "--paths", "2e4", "--steps", "100",
            "--estimator", "both", "--seed", "3"]
    rep = invoke_json(*args)
    header, rows = invoke_csv(*args)
    assert header == CSV_HEADERS["estimate"]
    assert len(rows) == 2
    for est, row in zip(rep["outputs"]["estimates"], rows):
        for col in ("p_hat", "std_err", "T"):
            assert float(row[header.index(col)]) == est[col]
    assert rep["inputs"]["seed"] == 3 and rep["inputs"]["paths"] == 20000


@pytest.mark.parametrize(
    "argv",
    [
        ["estimate", "--boundary", "1 - ln(1+t)", "--T", "5", "--paths", "3e4", "--steps", "100", "--estimator", "both"],
        ["slepian", "--boundary", "1 - ln(1+t)", "--T", "20", "--paths", "2e4", "--steps", "200"],
        ["bessel", "--paths", "5e4"],
    ],
)
def test_reports_byte_identical_across_threads(argv):
    outs = {invoke(*argv, "--threads", str(n), "--no-timing", "--chunk-size", "4096")[1] for n in (1, 2, 4)}
    assert len(outs) == 1
    rep = json.loads(outs.pop())
    assert rep["runtime_ms"] is None


def test_reports_identical_apart_from_runtime():
    argv = ["estimate", "--boundary", "1", "--paths", "1e4", "--steps", "50"]
    a, b = invoke_json(*argv), invoke_json(*argv)
    assert a["runtime_ms"] >= 0
    a.pop("runtime_ms"), b.pop("runtime_ms")
    assert a == b


def test_thread_env_var_does_not_change_report(monkeypatch):
    argv = ["estimate", "--boundary", "1 + exp(-t)", "--paths", "2e4", "--steps", "100", "--no-timing"]
    monkeypatch.setenv("MOVBOUND_THREADS", "1")
    one = invoke(*argv)[1]
    monkeypatch.setenv("MOVBOUND_THREADS", "3")
    assert invoke(*argv)[1] == one


def test_rate_constant_boundary_example():
    rep = invoke_json("rate", "--boundary", "1", "--t-grid", "1e2:1e4:5", "--paths", "1e6", "--seed", "7")
    assert -0.51 <= rep["outputs"]["slope"] <= -0.49
    assert len(rep["outputs"]["points"]) == 5


def test_rate_csv_rows():
    header, rows = invoke_csv("rate", "--boundary", "1", "--t-grid", "10,100,1000", "--paths", "1e4", "--dt", "1")
    assert header == CSV_HEADERS["rate"]
    assert [r[0] for r in rows] == ["point"] * 3 + ["fit"]


def test_novikov_and_slepian_csv():
    header, rows = invoke_csv("novikov", "--boundary", "1 + exp(-t)", "--t-grid", "10,100", "--paths", "5000")
    assert header == CSV_HEADERS["novikov"]
    assert {r[0] for r in rows} == {"sqrtT_p", "lhs", "rhs", "censor_fraction"}
    header, rows = invoke_csv("slepian", "--boundary", "1", "--paths", "5000")
    assert header == CSV_HEADERS["slepian"] and rows[0][-1] == "true"


def test_every_numeric_output_has_an_error_column():
    for command, header in CSV_HEADERS.items():
        assert any(col in header for col in ("std_err", "tolerance", "slope_halfwidth", "quad_tolerance")), command


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "movbound.cli", "exact", "--a", "2", "--T", "4", "--format", "csv"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == ",".join(CSV_HEADERS["exact"])
