"""The simulation studies, as functions from a config to report rows.

Every parameter point of a sweep reuses the configured master seed, so
neighbouring points see common random numbers and trends are not drowned in
seed noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from calib_lab.calib import (
    CalibrationReport,
    SimulationFailure,
    chi2_pvalues,
    select_test_function,
    simulate_hierarchical_batch,
    strong_rank_test,
    strong_test,
    weak_test,
)
from calib_lab.core.distributions import Normal
from calib_lab.core.rng import derive_seed
from calib_lab.core.types import AbcExhausted
from calib_lab.procedures.abc import AbcConfig, AbcProcedure
from calib_lab.procedures.conjugate import (
    BayesGaussian,
    ContaminatedGaussianModel,
    FractionalPosterior,
    GaussianLocationModel,
)
from calib_lab.procedures.gk import GKModel, GKParams
from calib_lab.procedures.gp import GpConfig, GpObservationModel, GpPrior, StationaryGpRegression
from calib_lab.procedures.laplace import LaplaceStudentT, StudentTLocationModel
from calib_lab.report import Histogram, ReportRow
from calib_lab.testfn import Evaluation, Identity

VIGNETTES = ("laplace", "abc", "fractional", "gp-split", "robust")

# desk-scale and published-scale replicate counts
DESK_N = {"laplace": 100_000, "abc": 100_000, "fractional": 100_000, "gp-split": 100, "robust": 100_000}
PAPER_N = {"laplace": 1_000_000, "abc": 1_000_000, "fractional": 1_000_000, "gp-split": 100, "robust": 100_000}
ABC_STRONG_N = (2_000, 10_000)  # desk, published
ABC_M = 99  # ensemble size; M + 1 = 100 splits into 20 rank bins


@dataclass(frozen=True)
class VignetteConfig:
    vignette: str
    n: Optional[int] = None
    seed: int = 0
    threads: int = 1
    nu_range: tuple = tuple(float(v) for v in range(1, 21))
    n_obs_range: tuple = tuple(range(1, 21))
    eps_range: tuple = tuple(float(v) for v in range(1, 11))
    t_set: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    contam_range: tuple = tuple(round(0.05 * i, 2) for i in range(7))
    s_range: tuple = (10, 30, 50, 100, 150)
    paper_scale: bool = False
    timing: bool = False
    n_strong: Optional[int] = None
    max_proposals: int = 1_000_000_000
    max_failure_rate: float = 1e-3
    obs_var: float = 1.0
    robust_t_set: tuple = (0.1, 0.2, 0.3)
    robust_n_obs: int = 1

    def __post_init__(self):
        if self.vignette not in VIGNETTES:
            raise ValueError(f"unknown vignette {self.vignette!r}; choose from {', '.join(VIGNETTES)}")
        for name in ("nu_range", "n_obs_range", "eps_range", "t_set", "contam_range", "s_range"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        if self.replicates < 100:
            raise ValueError("need at least 100 replicates")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not 0.0 <= self.max_failure_rate < 1.0:
            raise ValueError("max_failure_rate must lie in [0, 1)")

    @property
    def replicates(self) -> int:
        if self.n is not None:
            return int(self.n)
        return (PAPER_N if self.paper_scale else DESK_N)[self.vignette]

    @property
    def strong_replicates(self) -> int:
        if self.n_strong is not None:
            return int(self.n_strong)
        return ABC_STRONG_N[1 if self.paper_scale else 0]


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.t0 = time.perf_counter()

    def ms(self) -> int:
        if not self.enabled:
            return 0
        t = time.perf_counter()
        out, self.t0 = int(round(1000 * (t - self.t0))), t
        return out


def _row(cfg, name, value, mode, rep: CalibrationReport, clock, **extra) -> ReportRow:
    hist = None
    if rep.bin_edges is not None:
        hist = Histogram.from_arrays(rep.histogram, rep.bin_edges)
    info = {"failures": rep.failures, **{k: v for k, v in rep.extra.items() if k != "test_function"}, **extra}
    return ReportRow(cfg.vignette, name, float(value), mode, float(rep.statistic), float(rep.p_value),
                     int(rep.n_replicates), cfg.seed, clock.ms(), hist, info)


def run_laplace_vignette(cfg: VignetteConfig) -> list:
    """Strong and weak KS tests of the Laplace approximation, sweeping nu (N=5) and N (nu=3)."""
    prior = Normal(0.0, 1.0)
    f = Identity()
    clock = _Clock(cfg.timing)
    rows = []
    points = [("nu", nu, nu, 5) for nu in cfg.nu_range] + [("n_obs", N, 3.0, int(N)) for N in cfg.n_obs_range]
    for name, value, nu, N in points:
        proc = LaplaceStudentT(float(nu))
        model = StudentTLocationModel(float(nu), int(N))
        for mode, test in (("strong", strong_test), ("weak", weak_test)):
            rep = test(proc, prior, model, f, cfg.replicates, cfg.seed, cfg.threads)
            rows.append(_row(cfg, name, value, mode, rep, clock, nu=float(nu), n_obs=int(N)))
    return rows


def abc_procedures(eps: float, M: int, max_proposals: int, params: GKParams = GKParams(), n_obs: int = 20):
    model = GKModel(params, n_obs)
    return model, {
        "plain": AbcProcedure(model, AbcConfig(eps, M, max_proposals, noisy=False)),
        "noisy": AbcProcedure(model, AbcConfig(eps, M, max_proposals, noisy=True)),
    }


def _incomplete(cfg, name, value, mode, clock, exc) -> ReportRow:
    info = {"incomplete": True, "reason": str(exc)}
    if isinstance(exc, AbcExhausted):
        info.update(acceptance_rate=exc.acceptance_rate, replicate=exc.replicate)
    return ReportRow(cfg.vignette, name, float(value), mode, math.nan, math.nan, 0, cfg.seed, clock.ms(), None,
                     info)


def is_incomplete(row: ReportRow) -> bool:
    return bool(row.extra.get("incomplete", False))


def run_abc_vignette(cfg: VignetteConfig) -> list:
    """Rank (strong) and KS (weak) tests of plain and noisy ABC on the g-and-k model, per tolerance."""
    prior = Normal(0.0, 1.0)
    f = Identity()
    clock = _Clock(cfg.timing)
    rows = []
    for eps in cfg.eps_range:
        for variant in ("plain", "noisy"):
            model, procs = abc_procedures(float(eps), ABC_M, cfg.max_proposals)
            mode = f"strong-rank:{variant}"
            try:
                rep = strong_rank_test(procs[variant], prior, model, f, cfg.strong_replicates, ABC_M, 20,
                                       cfg.seed, cfg.threads, cfg.max_failure_rate)
                rows.append(_row(cfg, "eps", eps, mode, rep, clock, M=ABC_M))
            except AbcExhausted as exc:
                rows.append(_incomplete(cfg, "eps", eps, mode, clock, exc))
        for variant in ("plain", "noisy"):
            model, procs = abc_procedures(float(eps), 1, cfg.max_proposals)
            mode = f"weak:{variant}"
            try:
                rep = weak_test(procs[variant], prior, model, f, cfg.replicates, cfg.seed, cfg.threads,
                                max_failure_rate=cfg.max_failure_rate)
                rows.append(_row(cfg, "eps", eps, mode, rep, clock, M=1))
            except SimulationFailure as exc:
                rows.append(_incomplete(cfg, "eps", eps, mode, clock, exc))
    return rows


def run_fractional_vignette(cfg: VignetteConfig) -> list:
    """Strong and weak KS tests of fractional posteriors across exponents t."""
    prior = Normal(0.0, 1.0)
    model = GaussianLocationModel(cfg.obs_var, 1)
    f = Identity()
    clock = _Clock(cfg.timing)
    rows = []
    for t in cfg.t_set:
        proc = FractionalPosterior(cfg.obs_var, float(t))
        for mode, test in (("strong", strong_test), ("weak", weak_test)):
            rep = test(proc, prior, model, f, cfg.replicates, cfg.seed, cfg.threads)
            rows.append(_row(cfg, "t", t, mode, rep, clock, obs_var=cfg.obs_var))
    return rows


def run_robust_vignette(cfg: VignetteConfig) -> list:
    """Strong KS tests of Bayes and fractional posteriors under contaminated data."""
    prior = Normal(0.0, 3.0)
    f = Identity()
    clock = _Clock(cfg.timing)
    procs = [("bayes", BayesGaussian(1.0))] + [(f"fractional-{t:g}", FractionalPosterior(1.0, t))
                                              for t in cfg.robust_t_set]
    rows = []
    for eps in cfg.contam_range:
        model = ContaminatedGaussianModel(float(eps), n_obs=cfg.robust_n_obs)
        for label, proc in procs:
            rep = strong_test(proc, prior, model, f, cfg.replicates, cfg.seed, cfg.threads)
            rows.append(_row(cfg, "contamination", eps, f"strong:{label}", rep, clock))
    return rows


@dataclass
class GpSplitResult:
    """Per realisation: held-out log p-values for x_* and x_b, and the chosen x_*."""

    log_p_star: np.ndarray
    log_p_base: np.ndarray
    x_star: np.ndarray
    profiles: list = field(default_factory=list)


def gp_split_experiment(S: int, realisations: int, seed: int, gp: GpConfig = GpConfig(), x_base: float = 0.5,
                        threads: int = 1, keep_profiles: bool = False) -> GpSplitResult:
    """Select x_* on S1 by the smallest chi^2 p-value, then test x_* and x_b on the held-out S2."""
    if S < 4 or S % 2:
        raise ValueError("S must be an even number of at least 4")
    s = S // 2
    prior = GpPrior(gp)
    model = GpObservationModel(gp)
    proc = StationaryGpRegression(gp)
    candidates = [Evaluation(j) for j in range(gp.grid_size)]
    base = Evaluation(int(np.argmin(np.abs(gp.grid - x_base))))
    lp_star, lp_base, x_star, profiles = [], [], [], []
    for r in range(realisations):
        rseed = derive_seed(seed, r)
        sample = simulate_hierarchical_batch(prior, model, S, rseed, threads)
        S1, S2 = sample.take(slice(0, s)), sample.take(slice(s, S))
        chosen, pvals = select_test_function(candidates, S1, proc, prior, rseed)
        p2 = chi2_pvalues(proc, prior, S2, [chosen, base], rseed)
        with np.errstate(divide="ignore"):
            lp = np.log(np.maximum(p2, 1e-300))
        lp_star.append(lp[0])
        lp_base.append(lp[1])
        x_star.append(gp.grid[chosen.index])
        if keep_profiles:
            profiles.append(pvals)
    return GpSplitResult(np.array(lp_star), np.array(lp_base), np.array(x_star), profiles)


def run_gp_split_vignette(cfg: VignetteConfig) -> list:
    """Mean held-out log p-value of the data-driven x_* against the fixed x_b = 0.5, per S."""
    clock = _Clock(cfg.timing)
    R = cfg.replicates
    rows = []
    for S in cfg.s_range:
        res = gp_split_experiment(int(S), R, cfg.seed, threads=cfg.threads)
        diff = res.log_p_star - res.log_p_base
        common = {"realisations": R, "s": int(S) // 2,
                  "diff_mean": float(diff.mean()), "diff_se": float(diff.std(ddof=1) / math.sqrt(R)),
                  "x_star_mean": float(res.x_star.mean()), "x_star_var": float(res.x_star.var(ddof=1)),
                  "x_star_median": float(np.median(res.x_star))}
        for label, lp in (("x_star", res.log_p_star), ("x_b", res.log_p_base)):
            m = float(lp.mean())
            se = float(lp.std(ddof=1) / math.sqrt(R))
            # statistic: mean log p; p_value: its geometric-mean p-value
            rows.append(ReportRow(cfg.vignette, "S", float(S), f"chi2:{label}", m, float(math.exp(m)), R,
                                  cfg.seed, clock.ms(), None, {"log_p_se": se, **common}))
    return rows


RUNNERS = {
    "laplace": run_laplace_vignette,
    "abc": run_abc_vignette,
    "fractional": run_fractional_vignette,
    "gp-split": run_gp_split_vignette,
    "robust": run_robust_vignette,
}


def run_vignette(cfg: VignetteConfig) -> list:
    return RUNNERS[cfg.vignette](cfg)


def with_seed(cfg: VignetteConfig, seed: int) -> VignetteConfig:
    return replace(cfg, seed=seed)
