"""The g-and-k distribution and the five-number quartile summary."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from calib_lab._accel import njit
from calib_lab.core.rng import RngStream, StreamBatch

QUARTILE_PROBS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class GKParams:
    b: float = 1.0
    g: float = 2.0
    k: float = 0.5

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("g-and-k scale b must be positive")
        if not self.k > -0.5:
            raise ValueError("g-and-k kurtosis k must exceed -0.5")


@njit
def gk_transform(u, theta, b, g, k):
    # (1 - e^{-gu}) / (1 + e^{-gu}) == tanh(gu / 2), without overflow for large |gu|
    return theta + b * (1.0 + 0.8 * math.tanh(0.5 * g * u)) * u * (1.0 + u * u) ** k


def gk_quantile(u, theta: float, p: GKParams):
    """Push standard-normal scores ``u`` through the g-and-k transform."""
    u = np.asarray(u, dtype=float)
    return theta + p.b * (1.0 + 0.8 * np.tanh(0.5 * p.g * u)) * u * (1.0 + u * u) ** p.k


def gk_simulate(theta: float, p: GKParams, N: int, rng: RngStream) -> np.ndarray:
    if N < 1:
        raise ValueError("need at least one observation")
    return gk_quantile(rng.normal(N), float(theta), p)


@dataclass(frozen=True)
class GKModel:
    params: GKParams = GKParams()
    n_obs: int = 20

    def simulate(self, theta, rng: RngStream) -> np.ndarray:
        return gk_simulate(float(np.atleast_1d(theta)[0]), self.params, self.n_obs, rng)

    def simulate_batch(self, thetas, streams: StreamBatch) -> np.ndarray:
        loc = np.asarray(thetas, dtype=float).reshape(len(streams), -1)[:, :1]
        return gk_quantile(streams.normal(self.n_obs), 0.0, self.params) + loc


@njit
def sorted_quartiles(x, out):
    """Linear-interpolation quantiles of an already sorted ``x`` at 0, 1/4, 1/2, 3/4, 1."""
    n = x.size
    for j in range(5):
        h = (n - 1) * 0.25 * j
        lo = min(int(math.floor(h)), n - 1)
        hi = min(lo + 1, n - 1)
        out[j] = x[lo] + (h - lo) * (x[hi] - x[lo])


def quartile_summary(y) -> np.ndarray:
    """Min, lower quartile, median, upper quartile, max (linear interpolation between order statistics)."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] < 5:
        raise ValueError("the quartile summary needs at least 5 observations")
    x = np.sort(y, axis=-1)
    n = x.shape[-1]
    h = (n - 1) * np.asarray(QUARTILE_PROBS)
    lo = np.minimum(np.floor(h).astype(int), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    return x[..., lo] + (h - lo) * (x[..., hi] - x[..., lo])
