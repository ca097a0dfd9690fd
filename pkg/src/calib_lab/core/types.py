"""Parameters, datasets, posterior outputs and the two function abstractions.

Parameters and datasets are plain float arrays; ``as_param``/``as_dataset``
validate them. Procedures and models are duck-typed (see the Protocols);
the optional ``*_batch`` methods let the harness process many replicates at
once without changing the per-replicate random streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Protocol, Union, runtime_checkable

import numpy as np

from calib_lab.core.distributions import SCALAR_TYPES, GaussianVector, Normal
from calib_lab.core.rng import RngStream, StreamBatch


class CalibrationError(Exception):
    pass


class NoClosedFormPushforward(CalibrationError):
    """The (output, test function) pair has no closed-form pushforward cdf; use the rank test."""


class ConvergenceError(CalibrationError):
    pass


class AbcExhausted(CalibrationError):
    def __init__(self, message: str, acceptance_rate: float, replicate: Optional[int] = None):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
        self.replicate = replicate


def as_param(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("a parameter point is a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter entries must be finite")
    return arr


def as_dataset(values) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("a dataset is a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("dataset entries must be finite")
    return arr


@dataclass(frozen=True)
class SampledBelief:
    """A belief distribution available only through a sampler ``rng -> ParamPoint``."""

    sampler: Callable[[RngStream], Any]
    dim: int = 1

    def sample(self, rng: RngStream, size=None):
        if size is None:
            return self.sampler(rng)
        return np.array([self.sampler(rng) for _ in range(int(size))])


@dataclass(frozen=True)
class GridGaussian:
    """Independent Gaussian marginals of a function-valued parameter on a grid."""

    grid: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    def marginal(self, i: int) -> Normal:
        return Normal(float(self.mean[i]), max(float(self.var[i]), 1e-300))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class Analytic:
    dist: Any  # ScalarDistribution | GaussianVector | GridGaussian | SampledBelief

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.dist, SCALAR_TYPES) else self.dist.dim


@dataclass(frozen=True)
class Empirical:
    samples: np.ndarray  # (M, d)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError("empirical output needs at least one sample")
        object.__setattr__(self, "samples", s)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


PosteriorOutput = Union[Analytic, Empirical]


# batched outputs: row i is the output for replicate i -----------------------

@dataclass(frozen=True)
class NormalBatch:
    mean: np.ndarray
    var: np.ndarray
    failed: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GaussianBatch:
    mean: np.ndarray  # (n, d)
    var: np.ndarray  # (n, d) marginal variances
    cov: Optional[np.ndarray] = None  # (d, d) shared or (n, d, d)


@dataclass(frozen=True)
class EmpiricalBatch:
    samples: np.ndarray  # (n, M, d)
    failed: Optional[np.ndarray] = None
    proposals: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ListBatch:
    """Fallback for outputs with no vectorised form."""

    outputs: list = field(default_factory=list)


@runtime_checkable
class LearningProcedure(Protocol):
    def infer(self, belief, y: np.ndarray, rng: RngStream) -> PosteriorOutput: ...


@runtime_checkable
class DataGeneratingModel(Protocol):
    def simulate(self, theta: np.ndarray, rng: RngStream) -> np.ndarray: ...


def stack_outputs(outputs: list):
    """Turn a list of per-replicate outputs into the matching batch type."""
    if outputs and all(isinstance(o, Analytic) and isinstance(o.dist, Normal) for o in outputs):
        return NormalBatch(np.array([o.dist.mean for o in outputs]), np.array([o.dist.var for o in outputs]))
    if outputs and all(isinstance(o, Analytic) and isinstance(o.dist, GaussianVector) for o in outputs):
        mean = np.stack([o.dist.mean for o in outputs])
        cov = np.stack([o.dist.cov for o in outputs])
        return GaussianBatch(mean, np.stack([np.diag(c) for c in cov]), cov)
    if outputs and all(isinstance(o, Analytic) and isinstance(o.dist, GridGaussian) for o in outputs):
        return GaussianBatch(np.stack([o.dist.mean for o in outputs]), np.stack([o.dist.var for o in outputs]))
    if outputs and all(isinstance(o, Empirical) for o in outputs):
        sizes = {o.samples.shape for o in outputs}
        if len(sizes) == 1:
            return EmpiricalBatch(np.stack([o.samples for o in outputs]))
    return ListBatch(list(outputs))


def infer_batch(proc, belief, ys: np.ndarray, streams: StreamBatch):
    """Run ``proc`` over many datasets, vectorised when the procedure supports it."""
    if hasattr(proc, "infer_batch"):
        return proc.infer_batch(belief, ys, streams)
    outs = [proc.infer(belief, ys[i], streams.stream(i)) for i in range(len(streams))]
    return stack_outputs(outs)


def simulate_batch(model, thetas: np.ndarray, streams: StreamBatch) -> np.ndarray:
    if hasattr(model, "simulate_batch"):
        return model.simulate_batch(thetas, streams)
    return np.stack([np.asarray(model.simulate(thetas[i], streams.stream(i)), dtype=float)
                     for i in range(len(streams))])
