"""Test functions: maps from parameters to an interval of the real line.

Only the monotone ones (identity, coordinate, grid evaluation) get a
closed-form pushforward cdf. Anything else has to go through rank
statistics on sampled output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from calib_lab.core.distributions import SCALAR_TYPES, GaussianVector, Normal
from calib_lab.core.types import (
    Analytic,
    GaussianBatch,
    GridGaussian,
    ListBatch,
    NoClosedFormPushforward,
    NormalBatch,
)
from calib_lab.core import special


@dataclass(frozen=True)
class Identity:
    codomain = (-math.inf, math.inf)

    def apply(self, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size != 1:
            raise IndexError("Identity needs a one-dimensional parameter")
        return float(theta[0])

    def apply_batch(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            return thetas
        if thetas.shape[-1] != 1:
            raise IndexError("Identity needs a one-dimensional parameter")
        return thetas[..., 0]


@dataclass(frozen=True)
class Coordinate:
    index: int
    codomain = (-math.inf, math.inf)

    def apply(self, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if not 0 <= self.index < theta.size:
            raise IndexError(f"coordinate {self.index} out of range for dimension {theta.size}")
        return float(theta[self.index])

    def apply_batch(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if not 0 <= self.index < thetas.shape[-1]:
            raise IndexError(f"coordinate {self.index} out of range for dimension {thetas.shape[-1]}")
        return thetas[..., self.index]


@dataclass(frozen=True)
class Evaluation(Coordinate):
    """``theta -> theta(x_j)`` for a function stored by its values on a fixed grid."""

    @property
    def grid_index(self) -> int:
        return self.index


@dataclass(frozen=True, eq=False)
class SigmoidProduct:
    """prod_i 1 / (1 + exp(2 c (theta_i - center_i))); tends to the indicator of (-inf, center]."""

    center: np.ndarray
    sharpness: float = 1.0
    codomain = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")

    def apply(self, theta) -> float:
        return float(self.apply_batch(np.atleast_1d(np.asarray(theta, dtype=float))[None, :])[0])

    def apply_batch(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if thetas.shape[-1] != self.center.size:
            raise IndexError("parameter dimension does not match the sigmoid centre")
        z = 2.0 * self.sharpness * (thetas - self.center)
        # 1/(1+e^z) = exp(-logaddexp(0, z)); the log form stays finite for large c
        return np.exp(-np.logaddexp(0.0, z).sum(axis=-1))


TestFunction = Identity | Coordinate | Evaluation | SigmoidProduct


def apply(f, theta) -> float:
    return f.apply(theta)


def _marginal_index(f, dim: int):
    if isinstance(f, Identity):
        if dim != 1:
            raise NoClosedFormPushforward("Identity on a multivariate output")
        return 0
    if isinstance(f, Coordinate):
        if not 0 <= f.index < dim:
            raise IndexError(f"coordinate {f.index} out of range for dimension {dim}")
        return f.index
    raise NoClosedFormPushforward(f"no closed-form pushforward for {type(f).__name__}")


def marginal_law(dist, f):
    """The univariate law of f(theta) for theta ~ dist, when f is monotone."""
    if isinstance(dist, SCALAR_TYPES):
        _marginal_index(f, 1)
        return dist
    if isinstance(dist, (GaussianVector, GridGaussian)) or (hasattr(dist, "marginal") and hasattr(dist, "dim")):
        return dist.marginal(_marginal_index(f, dist.dim))
    raise NoClosedFormPushforward(f"no closed-form pushforward for {type(dist).__name__}")


def pushforward_cdf(post: Analytic, f, t: float) -> float:
    if not isinstance(post, Analytic):
        raise NoClosedFormPushforward("empirical output: use the rank test")
    return float(marginal_law(post.dist, f).cdf(t))


def pushforward_cdf_batch(batch, f, t: np.ndarray, tie_u: np.ndarray | None = None) -> np.ndarray:
    """Row-wise pushforward cdf for a batch of analytic outputs.

    A zero-variance marginal is a point mass; when ``t`` sits exactly on it the
    randomised PIT ``tie_u`` (uniform draws) is returned, or 0.5 without one.
    """
    t = np.asarray(t, dtype=float)
    if isinstance(batch, NormalBatch):
        _marginal_index(f, 1)
        return special.ndtr_array((t - batch.mean) / np.sqrt(batch.var))
    if isinstance(batch, GaussianBatch):
        j = _marginal_index(f, batch.mean.shape[1])
        sd = np.sqrt(np.maximum(batch.var[:, j], 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (t - batch.mean[:, j]) / sd
        m = batch.mean[:, j]
        z = np.where(sd > 0, z, np.where(t > m, np.inf, np.where(t < m, -np.inf, 0.0)))
        out = special.ndtr_array(z)
        tie = (sd == 0) & (t == m)
        if tie.any():
            out[tie] = 0.5 if tie_u is None else np.asarray(tie_u, dtype=float)[tie]
        return out
    if isinstance(batch, ListBatch):
        return np.array([pushforward_cdf(o, f, ti) for o, ti in zip(batch.outputs, t)])
    raise NoClosedFormPushforward(f"no closed-form pushforward for {type(batch).__name__}")
