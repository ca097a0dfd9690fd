"""Gaussian location models and the conjugate family of procedures.

Bayes, mirror Bayes (sign-flipped data), fractional posteriors and the
data-agnostic procedure, all for a Normal prior on a location parameter with
known observation variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from calib_lab.core.distributions import Normal, mixture_ppf_array
from calib_lab.core.rng import RngStream, StreamBatch
from calib_lab.core.types import Analytic, NormalBatch, as_dataset


def _require_normal(belief) -> Normal:
    if not isinstance(belief, Normal):
        raise TypeError(f"conjugate update needs a Normal belief, got {type(belief).__name__}")
    return belief


def fractional_posterior(prior: Normal, obs_var: float, t: float, y) -> Analytic:
    """Prior times likelihood^t, likelihood N(y_n; theta, obs_var)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"fractional exponent t must lie in [0, 1], got {t}")
    if not obs_var > 0:
        raise ValueError("obs_var must be positive")
    y = as_dataset(y)
    prior = _require_normal(prior)
    precision = 1.0 / prior.var + t * y.size / obs_var
    mean = (prior.mean / prior.var + t * float(np.sum(y)) / obs_var) / precision
    return Analytic(Normal(mean, 1.0 / precision))


def bayes_gaussian_location(prior: Normal, obs_var: float, y) -> Analytic:
    return fractional_posterior(prior, obs_var, 1.0, y)


def mirror_bayes(prior: Normal, obs_var: float, y) -> Analytic:
    return bayes_gaussian_location(prior, obs_var, -as_dataset(y))


def data_agnostic(prior, y=None) -> Analytic:
    return Analytic(prior)


def _fractional_batch(prior: Normal, obs_var: float, t: float, ys: np.ndarray) -> NormalBatch:
    ys = np.asarray(ys, dtype=float)
    ys = ys[:, None] if ys.ndim == 1 else ys
    precision = 1.0 / prior.var + t * ys.shape[1] / obs_var
    mean = (prior.mean / prior.var + t * ys.sum(axis=1) / obs_var) / precision
    return NormalBatch(mean, np.full(mean.shape, 1.0 / precision))


# learning procedures -------------------------------------------------------

@dataclass(frozen=True)
class FractionalPosterior:
    obs_var: float = 1.0
    t: float = 1.0

    def infer(self, belief, y, rng: RngStream | None = None) -> Analytic:
        return fractional_posterior(belief, self.obs_var, self.t, y)

    def infer_batch(self, belief, ys, streams: StreamBatch | None = None) -> NormalBatch:
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("fractional exponent t must lie in [0, 1]")
        return _fractional_batch(_require_normal(belief), self.obs_var, self.t, ys)


@dataclass(frozen=True)
class BayesGaussian:
    obs_var: float = 1.0

    def infer(self, belief, y, rng: RngStream | None = None) -> Analytic:
        return bayes_gaussian_location(belief, self.obs_var, y)

    def infer_batch(self, belief, ys, streams: StreamBatch | None = None) -> NormalBatch:
        return _fractional_batch(_require_normal(belief), self.obs_var, 1.0, ys)


@dataclass(frozen=True)
class MirrorBayes:
    obs_var: float = 1.0

    def infer(self, belief, y, rng: RngStream | None = None) -> Analytic:
        return mirror_bayes(belief, self.obs_var, y)

    def infer_batch(self, belief, ys, streams: StreamBatch | None = None) -> NormalBatch:
        return _fractional_batch(_require_normal(belief), self.obs_var, 1.0, -np.asarray(ys, dtype=float))


@dataclass(frozen=True)
class DataAgnostic:
    def infer(self, belief, y=None, rng: RngStream | None = None) -> Analytic:
        return data_agnostic(belief, y)

    def infer_batch(self, belief, ys, streams: StreamBatch | None = None):
        if isinstance(belief, Normal):
            n = np.asarray(ys).shape[0]
            return NormalBatch(np.full(n, belief.mean), np.full(n, belief.var))
        from calib_lab.core.types import ListBatch
        return ListBatch([Analytic(belief) for _ in range(np.asarray(ys).shape[0])])


# data-generating models ----------------------------------------------------

@dataclass(frozen=True)
class GaussianLocationModel:
    """y_n = theta + sqrt(obs_var) * z_n, n = 1..n_obs."""

    obs_var: float = 1.0
    n_obs: int = 1

    def simulate(self, theta, rng: RngStream) -> np.ndarray:
        loc = float(np.atleast_1d(theta)[0])
        return loc + math.sqrt(self.obs_var) * rng.normal(self.n_obs)

    def simulate_batch(self, thetas, streams: StreamBatch) -> np.ndarray:
        loc = np.asarray(thetas, dtype=float).reshape(len(streams), -1)[:, :1]
        return loc + math.sqrt(self.obs_var) * streams.normal(self.n_obs)

    def logpdf(self, y, theta) -> float:
        d = Normal(float(np.atleast_1d(theta)[0]), self.obs_var)
        return float(np.sum(d.logpdf(as_dataset(y))))


@dataclass(frozen=True)
class ContaminatedGaussianModel:
    """Each observation is N(theta, obs_var) w.p. 1 - contamination, else N(outlier_mean, outlier_var).

    Draws go through the mixture quantile, one uniform per observation.
    """

    contamination: float = 0.0
    obs_var: float = 1.0
    outlier_mean: float = 5.0
    outlier_var: float = 1.0
    n_obs: int = 1

    def __post_init__(self):
        if not 0.0 <= self.contamination <= 1.0:
            raise ValueError("contamination must lie in [0, 1]")

    def _draw(self, loc, u):
        return mixture_ppf_array(u, self.contamination, loc, math.sqrt(self.obs_var),
                                 self.outlier_mean, math.sqrt(self.outlier_var))

    def simulate(self, theta, rng: RngStream) -> np.ndarray:
        loc = float(np.atleast_1d(theta)[0])
        return self._draw(loc, rng.uniform(self.n_obs))

    def simulate_batch(self, thetas, streams: StreamBatch) -> np.ndarray:
        loc = np.asarray(thetas, dtype=float).reshape(len(streams), -1)[:, :1]
        u = streams.uniform(self.n_obs)
        return self._draw(np.broadcast_to(loc, u.shape), u)
