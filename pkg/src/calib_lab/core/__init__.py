from calib_lab.core.distributions import (
    GaussianVector,
    LogNormal,
    Normal,
    NormalMixture,
    ScalarDistribution,
    SpdError,
    StudentT,
    Uniform,
    cdf,
    quantile,
    sample,
    sample_gaussian_vector,
)
from calib_lab.core.rng import RngStream, StreamBatch, derive_seed
from calib_lab.core.types import (
    AbcExhausted,
    Analytic,
    CalibrationError,
    ConvergenceError,
    DataGeneratingModel,
    Empirical,
    GridGaussian,
    LearningProcedure,
    NoClosedFormPushforward,
    PosteriorOutput,
    SampledBelief,
    as_dataset,
    as_param,
)

__all__ = [
    "AbcExhausted", "Analytic", "CalibrationError", "ConvergenceError", "DataGeneratingModel",
    "Empirical", "GaussianVector", "GridGaussian", "LearningProcedure", "LogNormal",
    "NoClosedFormPushforward", "Normal", "NormalMixture", "PosteriorOutput", "RngStream",
    "SampledBelief", "ScalarDistribution", "SpdError", "StreamBatch", "StudentT", "Uniform",
    "as_dataset", "as_param", "cdf", "derive_seed", "quantile", "sample", "sample_gaussian_vector",
]
