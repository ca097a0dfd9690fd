from calib_lab.procedures.abc import AbcConfig, AbcProcedure, abc_infer, ball_offsets
from calib_lab.procedures.conjugate import (
    BayesGaussian,
    ContaminatedGaussianModel,
    DataAgnostic,
    FractionalPosterior,
    GaussianLocationModel,
    MirrorBayes,
    bayes_gaussian_location,
    data_agnostic,
    fractional_posterior,
    mirror_bayes,
)
from calib_lab.procedures.gk import GKModel, GKParams, gk_simulate, quartile_summary
from calib_lab.procedures.gp import (
    GpConfig,
    GpObservationModel,
    GpPrior,
    StationaryGpRegression,
    gp_fit_stationary,
    gp_simulate_truth,
)
from calib_lab.procedures.laplace import LaplaceStudentT, StudentTLocationModel, laplace_student_t
from calib_lab.procedures.richardson import DiracLinearModel, ProbabilisticRichardson, richardson_step

__all__ = [
    "AbcConfig", "AbcProcedure", "BayesGaussian", "ContaminatedGaussianModel", "DataAgnostic",
    "DiracLinearModel", "FractionalPosterior", "GKModel", "GKParams", "GaussianLocationModel",
    "GpConfig", "GpObservationModel", "GpPrior", "LaplaceStudentT", "MirrorBayes",
    "ProbabilisticRichardson", "StationaryGpRegression", "StudentTLocationModel", "abc_infer",
    "ball_offsets", "bayes_gaussian_location", "data_agnostic", "fractional_posterior",
    "gk_simulate", "gp_fit_stationary", "gp_simulate_truth", "laplace_student_t", "mirror_bayes",
    "quartile_summary", "richardson_step",
]
