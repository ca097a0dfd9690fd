import json
import math
import os
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calib_lab import cli
from calib_lab.report import CSV_COLUMNS, Histogram, ReportRow, emit_report, parse_report, sidecar_path
from calib_lab.vignettes import VignetteConfig

SCHEMA = json.loads(resources.files("calib_lab").joinpath("schemas/report.schema.json").read_text())


def _rows():
    h = Histogram((0.0, 0.25, 0.5, 0.75, 1.0), (3, 0, 5, 2))
    return [
        ReportRow("laplace", "nu", 1.0, "strong", 0.1234567890123, 1e-300, 100_000, 0, 0, h, {"failures": 0}),
        ReportRow("laplace", "nu", 2.0, "weak", 0.01, 0.5, 99_999, 0, 0, None, {"failures": 1}),
        ReportRow("abc", "eps", 0.05, "strong-rank:noisy", math.nan, math.nan, 0, 7, 0, None,
                  {"incomplete": True, "reason": "exhausted"}),
    ]


def _same(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        for c in CSV_COLUMNS:
            u, v = getattr(x, c), getattr(y, c)
            assert (isinstance(u, float) and math.isnan(u) and math.isnan(v)) or u == v, c
        assert x.histogram == y.histogram


def test_empty_rows_give_header_only_csv(tmp_path):
    out = tmp_path / "r.csv"
    emit_report([], out)
    assert out.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert parse_report(out) == []


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(tmp_path, fmt):
    out = tmp_path / f"r.{fmt}"
    emit_report(_rows(), out, fmt)
    assert sidecar_path(out).exists()
    _same(parse_report(out), _rows())


@given(st.floats(allow_nan=False, allow_infinity=False), st.floats(0, 1), st.integers(0, 10**9))
def test_round_trip_values(stat, p, n):
    import tempfile
    rows = [ReportRow("robust", "contamination", 0.05, "strong:bayes", stat, p, n, 3)]
    with tempfile.TemporaryDirectory() as d:
        for fmt in ("csv", "json"):
            path = os.path.join(d, "r." + fmt)
            emit_report(rows, path, fmt)
            _same(parse_report(path), rows)


def test_json_validates_against_schema(tmp_path):
    out = tmp_path / "r.json"
    emit_report(_rows(), out, "json")
    jsonschema.validate(json.loads(out.read_text()), SCHEMA)
    bad = json.loads(out.read_text())
    bad[0]["p_value"] = 1.5
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, SCHEMA)


def test_sidecar_layout(tmp_path):
    out = tmp_path / "r.csv"
    emit_report(_rows(), out)
    lines = sidecar_path(out).read_text().splitlines()
    assert lines[0] == "row,bin_lo,bin_hi,count"
    assert lines[1:] == ["0,0.0,0.25,3", "0,0.25,0.5,0", "0,0.5,0.75,5", "0,0.75,1.0,2"]


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path / "r.x", "xml")
    with pytest.raises(OSError, match="missing"):
        emit_report([], tmp_path / "missing" / "r.csv")


# ----- configuration ---------------------------------------------------------

def test_parse_range():
    assert cli.parse_range("1:5") == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert cli.parse_range("0:0.3:0.05") == (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    assert cli.parse_range("0,0.5,1") == (0.0, 0.5, 1.0)
    assert cli.parse_range("10:150:70", int) == (10, 80, 150)
    for bad in ("", "5:1", "1:2:0", "1:2:3:4", "x"):
        with pytest.raises(ValueError):
            cli.parse_range(bad)
    with pytest.raises(ValueError):
        cli.parse_range("1.5,2", int)


@pytest.mark.parametrize("kw", [dict(vignette="ode"), dict(vignette="laplace", n=99),
                                dict(vignette="laplace", nu_range=()), dict(vignette="laplace", threads=0),
                                dict(vignette="laplace", seed=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        VignetteConfig(**kw)


def test_config_sizes():
    assert VignetteConfig("laplace").replicates == 100_000
    assert VignetteConfig("laplace", paper_scale=True).replicates == 1_000_000
    assert VignetteConfig("abc").strong_replicates == 2_000
    assert VignetteConfig("abc", paper_scale=True).strong_replicates == 10_000
    assert VignetteConfig("gp-split").replicates == 100
    assert VignetteConfig("robust", contam_range=(0.0, 0.1)).contam_range == (0.0, 0.1)


def test_threads_env_fallback(monkeypatch):
    args = cli.build_parser().parse_args(["--vignette", "laplace", "--out", "x.csv"])
    monkeypatch.setenv("CALIB_LAB_THREADS", "3")
    assert cli.config_from_args(args).threads == 3
    args = cli.build_parser().parse_args(["--vignette", "laplace", "--out", "x.csv", "--threads", "2"])
    assert cli.config_from_args(args).threads == 2
    monkeypatch.delenv("CALIB_LAB_THREADS")
    args = cli.build_parser().parse_args(["--vignette", "laplace", "--out", "x.csv"])
    assert cli.config_from_args(args).threads == 1


# ----- exit codes ------------------------------------------------------------

def test_exit_ok_and_outputs(tmp_path):
    out = tmp_path / "f.json"
    code = cli.main(["--vignette", "fractional", "--n", "1000", "--t-set", "0,1", "--out", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    jsonschema.validate(data, SCHEMA)
    assert [(d["param_value"], d["mode"]) for d in data] == [(0.0, "strong"), (0.0, "weak"),
                                                              (1.0, "strong"), (1.0, "weak")]
    assert all(d["n"] == 1000 and 0 <= d["p_value"] <= 1 for d in data)


@pytest.mark.parametrize("argv", [
    ["--vignette", "nope", "--out", "x.csv"],
    ["--vignette", "laplace", "--n", "10", "--out", "x.csv"],
    ["--vignette", "laplace", "--nu-range", "5:1", "--out", "x.csv"],
    ["--vignette", "laplace", "--threads", "0", "--out", "x.csv"],
    ["--vignette", "laplace"],
])
def test_exit_config_error(argv, capsys):
    assert cli.main(argv) == 2


def test_exit_unwritable_path(tmp_path):
    argv = ["--vignette", "fractional", "--n", "100", "--t-set", "1", "--out", str(tmp_path / "no" / "r.csv")]
    assert cli.main(argv) == 2


def test_exit_failure_on_exhaustion(tmp_path, capsys):
    out = tmp_path / "a.csv"
    code = cli.main(["--vignette", "abc", "--n", "100", "--n-strong", "100", "--eps-range", "0.2",
                     "--max-proposals", "1000", "--out", str(out)])
    assert code == 3
    rows = parse_report(out)
    assert len(rows) == 4 and all(math.isnan(r.p_value) and r.n == 0 for r in rows)
    assert "incomplete" in capsys.readouterr().err


def test_console_script_runs(tmp_path):
    out = tmp_path / "r.csv"
    res = subprocess.run([sys.executable, "-m", "calib_lab.cli", "--vignette", "robust", "--n", "200",
                          "--contam-range", "0", "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    rows = parse_report(out)
    assert {r.mode for r in rows} == {"strong:bayes", "strong:fractional-0.1", "strong:fractional-0.2",
                                      "strong:fractional-0.3"}
