import math
import os
import subprocess
import sys

import numpy as np
import pytest

from calib_lab.report import parse_report
from calib_lab.vignettes import VignetteConfig, gp_split_experiment, run_vignette


def _check_rows(rows, cfg):
    for r in rows:
        assert 0.0 <= r.p_value <= 1.0
        assert r.n == cfg.replicates - r.extra.get("failures", 0)
        assert r.seed == cfg.seed and r.wall_ms == 0
        assert r.histogram is None or sum(r.histogram.counts) == r.n


def test_laplace_rows():
    cfg = VignetteConfig("laplace", n=2000, nu_range=(1.0, 20.0), n_obs_range=(2,))
    rows = run_vignette(cfg)
    assert [(r.param_name, r.param_value, r.mode) for r in rows] == [
        ("nu", 1.0, "strong"), ("nu", 1.0, "weak"), ("nu", 20.0, "strong"), ("nu", 20.0, "weak"),
        ("n_obs", 2.0, "strong"), ("n_obs", 2.0, "weak")]
    assert rows[0].extra["n_obs"] == 5 and rows[4].extra["nu"] == 3.0
    _check_rows(rows, cfg)


@pytest.mark.slow
def test_laplace_strong_rejects_at_nu_20_with_1e6():
    cfg = VignetteConfig("laplace", n=1_000_000, nu_range=(20.0,), n_obs_range=(5,))
    (strong,) = [r for r in run_vignette(cfg) if r.mode == "strong" and r.param_name == "nu"]
    assert strong.p_value < 0.05


def _laplace_weak(n, n_obs_range):
    cfg = VignetteConfig("laplace", n=n, nu_range=(3.0,), n_obs_range=n_obs_range)
    return [r for r in run_vignette(cfg) if r.mode == "weak" and r.param_name == "n_obs"]


def test_laplace_weak_rejects_at_small_n():
    (w,) = _laplace_weak(100_000, (1,))
    assert w.p_value < 0.05


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="with an exact Hessian the weak error at N >= 10 is below KS resolution at 1e6")
def test_laplace_weak_rejects_up_to_n_20():
    weak = _laplace_weak(1_000_000, (10, 20))
    assert all(r.p_value < 0.05 for r in weak)


def test_fractional_rows():
    cfg = VignetteConfig("fractional", n=20_000, t_set=(0.0, 0.5, 1.0))
    rows = run_vignette(cfg)
    _check_rows(rows, cfg)
    by = {(r.param_value, r.mode): r for r in rows}
    assert by[(1.0, "strong")].p_value > 1e-3 and by[(0.0, "strong")].p_value > 1e-3
    assert by[(0.5, "strong")].p_value < 1e-6


def test_robust_small():
    cfg = VignetteConfig("robust", n=20_000, contam_range=(0.0, 0.2))
    rows = run_vignette(cfg)
    _check_rows(rows, cfg)
    assert len(rows) == 8
    clean = {r.mode: r for r in rows if r.param_value == 0.0}
    assert clean["strong:bayes"].p_value > 0.05
    assert all(r.p_value < 1e-4 for r in rows if r.param_value > 0)


def test_gp_split_rows():
    cfg = VignetteConfig("gp-split", n=100, s_range=(10,))
    rows = run_vignette(cfg)
    assert [r.mode for r in rows] == ["chi2:x_star", "chi2:x_b"]
    for r in rows:
        assert r.param_name == "S" and r.n == 100 and r.extra["s"] == 5
        assert r.p_value == pytest.approx(math.exp(r.statistic))


def test_gp_selection_variance_shrinks_with_s():
    small = gp_split_experiment(10, 100, seed=0)
    large = gp_split_experiment(150, 100, seed=0)
    assert small.x_star.var() > large.x_star.var()


@pytest.mark.xfail(strict=True, reason="with sigma(x) = 1 + x the profile minimum sits near x = 1")
def test_gp_profile_minimum_near_zero():
    res = gp_split_experiment(300, 1, seed=0, keep_profiles=True)
    assert 0 <= np.argmin(res.profiles[0]) / 100 <= 0.3


def test_abc_small():
    cfg = VignetteConfig("abc", n=1000, n_strong=200, eps_range=(5.0,))
    rows = run_vignette(cfg)
    assert [r.mode for r in rows] == ["strong-rank:plain", "strong-rank:noisy", "weak:plain", "weak:noisy"]
    _check_rows([r for r in rows if r.mode.startswith("weak")], cfg)
    for r in rows[:2]:
        assert r.n == 200 and r.extra["M"] == 99 and 0 < r.extra["acceptance_rate"] <= 1


def test_same_seed_same_rows_other_seed_differs():
    cfg = VignetteConfig("fractional", n=1000, t_set=(0.5,))
    a, b = run_vignette(cfg), run_vignette(cfg)
    c = run_vignette(VignetteConfig("fractional", n=1000, t_set=(0.5,), seed=1))
    assert [r.statistic for r in a] == [r.statistic for r in b]
    assert [r.statistic for r in a] != [r.statistic for r in c]


def _run_cli(tmp_path, name, env_extra, args):
    out = tmp_path / name
    env = {**os.environ, **env_extra}
    res = subprocess.run([sys.executable, "-m", "calib_lab.cli", *args, "--out", str(out)],
                         env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return parse_report(out)


@pytest.mark.parametrize("args", [
    ["--vignette", "laplace", "--n", "3000", "--nu-range", "1,4", "--n-obs-range", "3"],
    ["--vignette", "abc", "--n", "500", "--n-strong", "100", "--eps-range", "2,6"],
    ["--vignette", "robust", "--n", "3000", "--contam-range", "0,0.1"],
], ids=["laplace", "abc", "robust"])
def test_numba_and_numpy_backends_agree(tmp_path, args):
    fast = _run_cli(tmp_path, "fast.csv", {"CALIB_LAB_DISABLE_NUMBA": "0"}, args)
    slow = _run_cli(tmp_path, "slow.csv", {"CALIB_LAB_DISABLE_NUMBA": "1"}, args)
    assert len(fast) == len(slow)
    for a, b in zip(fast, slow):
        assert (a.mode, a.param_value, a.n) == (b.mode, b.param_value, b.n)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-9, abs=1e-12)
        assert a.p_value == pytest.approx(b.p_value, rel=1e-6, abs=1e-12)
