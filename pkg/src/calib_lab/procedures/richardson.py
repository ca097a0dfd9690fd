"""Probabilistic Richardson iteration for A theta = y.

Each step pushes the Gaussian belief through the affine map
``theta -> (I - eps A) theta + eps y``, whose fixed point is ``A^{-1} y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from calib_lab.core.distributions import GaussianVector
from calib_lab.core.rng import RngStream, StreamBatch
from calib_lab.core.types import Analytic, GaussianBatch


def _check_dims(A: np.ndarray, d: int, y: np.ndarray):
    if A.shape != (d, d):
        raise ValueError(f"A has shape {A.shape}, expected ({d}, {d})")
    if y.shape[-1] != d:
        raise ValueError(f"y has length {y.shape[-1]}, expected {d}")


def richardson_step(g: GaussianVector, A, y, eps: float) -> GaussianVector:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _check_dims(A, g.dim, y)
    if not eps > 0:
        raise ValueError("step size must be positive")
    R = np.eye(g.dim) - eps * A
    cov = R @ g.cov @ R.T
    return GaussianVector(R @ g.mean + eps * y, 0.5 * (cov + cov.T))


def contraction_factor(A, eps: float) -> float:
    """Spectral norm of I - eps A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return float(np.linalg.norm(np.eye(A.shape[0]) - eps * A, 2))


@dataclass(frozen=True, eq=False)
class DiracLinearModel:
    """The dataset is y = A theta exactly; no randomness is consumed."""

    A: np.ndarray

    def simulate(self, theta, rng: RngStream | None = None) -> np.ndarray:
        return np.asarray(self.A, dtype=float) @ np.atleast_1d(np.asarray(theta, dtype=float))

    def simulate_batch(self, thetas, streams: StreamBatch | None = None) -> np.ndarray:
        return np.atleast_2d(np.asarray(thetas, dtype=float)) @ np.asarray(self.A, dtype=float).T


@dataclass(frozen=True, eq=False)
class ProbabilisticRichardson:
    A: np.ndarray
    eps: float
    n_steps: int = 1

    def _operators(self, d: int):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        R = np.eye(d) - self.eps * A
        Rk = np.linalg.matrix_power(R, self.n_steps)
        # sum_{j<k} R^j eps, applied to y
        S = np.zeros((d, d))
        P = np.eye(d)
        for _ in range(self.n_steps):
            S += P
            P = P @ R
        return A, Rk, self.eps * S

    def infer(self, belief: GaussianVector, y, rng: RngStream | None = None) -> Analytic:
        g = belief
        for _ in range(self.n_steps):
            g = richardson_step(g, self.A, y, self.eps)
        return Analytic(g)

    def infer_batch(self, belief: GaussianVector, ys, streams: StreamBatch | None = None) -> GaussianBatch:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        A, Rk, S = self._operators(belief.dim)
        _check_dims(A, belief.dim, ys)
        mean = belief.mean @ Rk.T + ys @ S.T
        cov = Rk @ belief.cov @ Rk.T
        cov = 0.5 * (cov + cov.T)
        return GaussianBatch(mean, np.broadcast_to(np.diag(cov), mean.shape).copy(), cov)
