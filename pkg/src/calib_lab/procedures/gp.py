"""Hierarchical GP truth and a stationary GP regression fitted to it.

The parameter is a function on a fixed grid of [0, 1]. The truth is
``theta(x) = sigma(x) g(x)`` with ``g ~ GP(0, k)``; the procedure under test
fits ``theta(x) = sigma0 g(x)`` with ``sigma0`` estimated by maximum
likelihood. Datasets are stored as one vector ``[x_1..x_N, y_1..y_N]`` of
noiseless observations at sites snapped to the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from calib_lab.core.distributions import Normal
from calib_lab.core.rng import RngStream, StreamBatch
from calib_lab.core.types import Analytic, CalibrationError, GaussianBatch, GridGaussian

JITTER = 1e-10
VAR_FLOOR = 1e-10


def _unit_plus_x(x):
    return 1.0 + np.asarray(x, dtype=float)


@dataclass(frozen=True)
class GpConfig:
    length_scale: float = 0.1
    grid_size: int = 101
    n_obs: int = 10
    scale: Callable = _unit_plus_x

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length scale must be positive")
        if self.grid_size < self.n_obs:
            raise ValueError("grid must have at least as many points as observations")
        if self.n_obs < 1:
            raise ValueError("need at least one observation")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_size)


def sq_exp_kernel(a, b, length_scale: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.exp(-((a[:, None] - b[None, :]) / length_scale) ** 2)


def robust_cholesky(K: np.ndarray, start: float = JITTER, max_tries: int = 12) -> np.ndarray:
    """Cholesky factor of K + j I, with j growing tenfold until it succeeds."""
    scale = float(np.mean(np.diag(K)))
    jitter = start * scale
    eye = np.eye(K.shape[0])
    for _ in range(max_tries):
        try:
            return np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CalibrationError("kernel matrix is numerically singular even after jitter")


def snap(x, grid_size: int) -> np.ndarray:
    """Index of the nearest grid point for sites in [0, 1]."""
    return np.clip(np.rint(np.asarray(x, dtype=float) * (grid_size - 1)), 0, grid_size - 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class GpPrior:
    """Belief over grid functions: theta(x) = sigma(x) g(x), g ~ GP(0, k)."""

    cfg: GpConfig = field(default_factory=GpConfig)

    @cached_property
    def _factor(self) -> np.ndarray:
        grid = self.cfg.grid
        L = robust_cholesky(sq_exp_kernel(grid, grid, self.cfg.length_scale))
        return self.cfg.scale(grid)[:, None] * L

    @property
    def dim(self) -> int:
        return self.cfg.grid_size

    def marginal(self, i: int) -> Normal:
        s = float(self.cfg.scale(self.cfg.grid[i]))
        return Normal(0.0, s * s)

    def sample(self, rng: RngStream, size=None):
        if size is None:
            return self._factor @ rng.normal(self.dim)
        return rng.normal((int(size), self.dim)) @ self._factor.T

    def sample_batch(self, streams: StreamBatch) -> np.ndarray:
        return streams.normal(self.dim) @ self._factor.T


def gp_simulate_truth(cfg: GpConfig, rng: RngStream):
    """(theta on the grid, observation sites, noiseless observations)."""
    theta = GpPrior(cfg).sample(rng.spawn(0))
    idx = snap(rng.spawn(1).uniform(cfg.n_obs), cfg.grid_size)
    return theta, cfg.grid[idx], theta[idx]


@dataclass(frozen=True, eq=False)
class GpObservationModel:
    """Noiseless values of the grid function at uniform sites snapped to the grid."""

    cfg: GpConfig = field(default_factory=GpConfig)

    def simulate(self, theta, rng: RngStream) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        idx = snap(rng.uniform(self.cfg.n_obs), self.cfg.grid_size)
        return np.concatenate([self.cfg.grid[idx], theta[idx]])

    def simulate_batch(self, thetas, streams: StreamBatch) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        idx = snap(streams.uniform(self.cfg.n_obs), self.cfg.grid_size)
        return np.concatenate([self.cfg.grid[idx], np.take_along_axis(thetas, idx, axis=1)], axis=1)


def split_dataset(y) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    n = y.size // 2
    return y[:n], y[n:]


@dataclass(frozen=True)
class GpPredictor:
    x_obs: np.ndarray
    alpha: np.ndarray  # K^{-1} y
    chol: np.ndarray  # Cholesky factor of K + jitter I
    sigma0_sq: float
    length_scale: float

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        kx = sq_exp_kernel(np.atleast_1d(x), self.x_obs, self.length_scale)
        v = np.linalg.solve(self.chol, kx.T)
        mean = kx @ self.alpha
        var = self.sigma0_sq * np.maximum(1.0 - np.sum(v * v, axis=0), 0.0)
        return mean, var

    def __call__(self, x: float) -> Normal:
        m, v = self.predict([x])
        return Normal(float(m[0]), max(float(v[0]), 1e-300))


def gp_fit_stationary(cfg: GpConfig, x_obs, y_obs):
    """ML amplitude ``sigma0^2 = y^T K^{-1} y / N`` and the resulting predictor."""
    x = np.asarray(x_obs, dtype=float)
    y = np.asarray(y_obs, dtype=float)
    if x.shape != y.shape or x.size < 1:
        raise ValueError("x_obs and y_obs must be non-empty and the same length")
    if np.unique(x).size != x.size:
        raise ValueError("observation sites must be distinct")
    K = sq_exp_kernel(x, x, cfg.length_scale) + JITTER * np.eye(x.size)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError("kernel matrix is numerically singular after jitter") from exc
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
    sigma0_sq = max(float(y @ alpha) / x.size, VAR_FLOOR)
    return sigma0_sq, GpPredictor(x, alpha, L, sigma0_sq, cfg.length_scale)


@dataclass(frozen=True, eq=False)
class StationaryGpRegression:
    cfg: GpConfig = field(default_factory=GpConfig)

    def _grid_posterior(self, y) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = split_dataset(y)
        idx = snap(xs, self.cfg.grid_size)
        # repeated sites carry the same noiseless value; keep one of each
        idx, first = np.unique(idx, return_index=True)
        grid = self.cfg.grid
        _, pred = gp_fit_stationary(self.cfg, grid[idx], ys[first])
        mean, var = pred.predict(grid)
        mean[idx] = ys[first]
        var[idx] = 0.0
        return mean, var

    def infer(self, belief, y, rng: RngStream | None = None) -> Analytic:
        mean, var = self._grid_posterior(y)
        return Analytic(GridGaussian(self.cfg.grid, mean, var))

    def infer_batch(self, belief, ys, streams: StreamBatch | None = None) -> GaussianBatch:
        ys = np.asarray(ys, dtype=float)
        out = [self._grid_posterior(row) for row in ys]
        return GaussianBatch(np.stack([m for m, _ in out]), np.stack([v for _, v in out]))
