"""Simulation-based tests of whether a learning procedure is strongly or weakly calibrated."""

from calib_lab._accel import backend
from calib_lab.calib import (
    CalibrationReport,
    HierarchicalBatch,
    HierarchicalSample,
    SimulationFailure,
    chi2_pvalues,
    select_test_function,
    simulate_hierarchical,
    simulate_hierarchical_batch,
    strong_rank_test,
    strong_test,
    strong_test_many,
    weak_mmd_test,
    weak_test,
)
from calib_lab.core import *  # noqa: F401,F403
from calib_lab.core import __all__ as _core_all
from calib_lab.gof import (
    GofResult,
    RankHistogram,
    chi2_pit_test,
    ks_statistic,
    ks_uniform_test,
    mmd_permutation_test,
    rank_statistic,
    rank_uniformity_test,
)
from calib_lab.procedures import *  # noqa: F401,F403
from calib_lab.procedures import __all__ as _proc_all
from calib_lab.report import ReportRow, emit_report, parse_report
from calib_lab.testfn import Coordinate, Evaluation, Identity, SigmoidProduct, marginal_law, pushforward_cdf
from calib_lab.vignettes import VignetteConfig, run_vignette

__version__ = "0.1.0"

__all__ = [
    *_core_all, *_proc_all,
    "CalibrationReport", "Coordinate", "Evaluation", "GofResult", "HierarchicalBatch",
    "HierarchicalSample", "Identity", "RankHistogram", "ReportRow", "SigmoidProduct",
    "SimulationFailure", "VignetteConfig", "backend", "chi2_pit_test", "chi2_pvalues", "emit_report",
    "ks_statistic", "ks_uniform_test", "marginal_law", "mmd_permutation_test", "parse_report",
    "pushforward_cdf", "rank_statistic", "rank_uniformity_test", "run_vignette",
    "select_test_function", "simulate_hierarchical", "simulate_hierarchical_batch",
    "strong_rank_test", "strong_test", "strong_test_many", "weak_mmd_test", "weak_test",
]
