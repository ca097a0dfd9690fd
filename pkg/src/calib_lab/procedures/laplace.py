"""Laplace approximation for a Normal prior and Student-t observations.

The negative log posterior (up to a constant) is

    phi(theta) = (theta - m0)^2 / (2 v0) + (nu + 1)/2 * sum log1p(r_n^2 / (nu s^2)),
    r_n = y_n - theta,

minimised by damped Newton with Armijo backtracking; the output is
N(theta_hat, 1 / phi''(theta_hat)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from calib_lab._accel import USE_NUMBA, njit
from calib_lab.core.distributions import Normal, StudentT
from calib_lab.core.rng import RngStream, StreamBatch
from calib_lab.core.types import Analytic, ConvergenceError, NormalBatch, as_dataset

GRAD_TOL = 1e-10
MAX_ITER = 200
FLAT = 1e-13


@njit
def _objective(theta, y, m0, v0, nu, s2):
    d = theta - m0
    acc = 0.0
    for n in range(y.size):
        r = y[n] - theta
        acc += math.log1p(r * r / (nu * s2))
    return 0.5 * d * d / v0 + 0.5 * (nu + 1.0) * acc


@njit
def _derivs(theta, y, m0, v0, nu, s2):
    g = (theta - m0) / v0
    h = 1.0 / v0
    c = nu * s2
    for n in range(y.size):
        r = y[n] - theta
        q = c + r * r
        g -= (nu + 1.0) * r / q
        h += (nu + 1.0) * (c - r * r) / (q * q)
    return g, h


@njit
def _newton(theta, y, m0, v0, nu, s2):
    """Returns (theta, hessian, converged)."""
    f = _objective(theta, y, m0, v0, nu, s2)
    for _ in range(MAX_ITER):
        g, h = _derivs(theta, y, m0, v0, nu, s2)
        if abs(g) < GRAD_TOL:
            return theta, h, h > 0.0
        step = -g / h if h > 0.0 else -g * v0
        slope = g * step
        if h > 0.0 and -slope <= FLAT * (1.0 + abs(f)):
            # predicted decrease is below rounding of phi; line search is blind here
            theta = theta + step
            f = _objective(theta, y, m0, v0, nu, s2)
            continue
        alpha = 1.0
        while True:
            cand = theta + alpha * step
            fc = _objective(cand, y, m0, v0, nu, s2)
            if fc <= f + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                return theta, h, False
        theta = cand
        f = fc
    g, h = _derivs(theta, y, m0, v0, nu, s2)
    return theta, h, abs(g) < GRAD_TOL and h > 0.0


@njit
def _laplace_one(y, m0, v0, nu, s2):
    start = (m0 / v0 + y.sum()) / (1.0 / v0 + y.size)
    theta, h, ok = _newton(start, y, m0, v0, nu, s2)
    if not ok:
        theta, h, ok = _newton(np.median(y), y, m0, v0, nu, s2)
    return theta, h, ok


@njit
def _laplace_rows_nb(ys, m0, v0, nu, s2):
    n = ys.shape[0]
    mode = np.empty(n)
    hess = np.empty(n)
    ok = np.empty(n, dtype=np.bool_)
    for i in range(n):
        mode[i], hess[i], ok[i] = _laplace_one(ys[i], m0, v0, nu, s2)
    return mode, hess, ok


# numpy fallback: all rows iterate together, converged rows are frozen

def _objective_np(theta, ys, m0, v0, nu, s2):
    r = ys - theta[:, None]
    return 0.5 * (theta - m0) ** 2 / v0 + 0.5 * (nu + 1.0) * np.log1p(r * r / (nu * s2)).sum(axis=1)


def _derivs_np(theta, ys, m0, v0, nu, s2):
    c = nu * s2
    r = ys - theta[:, None]
    q = c + r * r
    g = (theta - m0) / v0 - (nu + 1.0) * (r / q).sum(axis=1)
    h = 1.0 / v0 + (nu + 1.0) * ((c - r * r) / (q * q)).sum(axis=1)
    return g, h


def _newton_np(theta, ys, m0, v0, nu, s2):
    theta = theta.copy()
    active = np.ones(theta.size, dtype=bool)
    ok = np.zeros(theta.size, dtype=bool)
    f = _objective_np(theta, ys, m0, v0, nu, s2)
    for _ in range(MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        yi = ys[idx]
        g, h = _derivs_np(theta[idx], yi, m0, v0, nu, s2)
        done = np.abs(g) < GRAD_TOL
        ok[idx[done]] = h[done] > 0.0
        active[idx[done]] = False
        keep = ~done
        idx, yi, g, h = idx[keep], yi[keep], g[keep], h[keep]
        if idx.size == 0:
            break
        pos = h > 0.0
        step = np.where(pos, -g / np.where(pos, h, 1.0), -g * v0)
        slope = g * step
        flat = pos & (-slope <= FLAT * (1.0 + np.abs(f[idx])))
        cand = theta[idx] + step
        fc = np.empty(idx.size)
        if flat.any():
            fc[flat] = _objective_np(cand[flat], yi[flat], m0, v0, nu, s2)
        alpha = np.ones(idx.size)
        pending = ~flat
        while pending.any():
            p = np.flatnonzero(pending)
            trial = theta[idx[p]] + alpha[p] * step[p]
            ft = _objective_np(trial, yi[p], m0, v0, nu, s2)
            good = ft <= f[idx[p]] + 1e-4 * alpha[p] * slope[p]
            cand[p[good]] = trial[good]
            fc[p[good]] = ft[good]
            pending[p[good]] = False
            alpha[p[~good]] *= 0.5
            dead = p[~good][alpha[p[~good]] < 1e-14]
            if dead.size:
                # line search failed: freeze as not converged
                cand[dead] = theta[idx[dead]]
                fc[dead] = f[idx[dead]]
                active[idx[dead]] = False
                pending[dead] = False
        theta[idx] = cand
        f[idx] = fc
    rest = np.flatnonzero(active)
    if rest.size:
        g, h = _derivs_np(theta[rest], ys[rest], m0, v0, nu, s2)
        ok[rest] = (np.abs(g) < GRAD_TOL) & (h > 0.0)
    _, hess = _derivs_np(theta, ys, m0, v0, nu, s2)
    return theta, hess, ok


def _laplace_rows_np(ys, m0, v0, nu, s2):
    start = (m0 / v0 + ys.sum(axis=1)) / (1.0 / v0 + ys.shape[1])
    mode, hess, ok = _newton_np(start, ys, m0, v0, nu, s2)
    bad = np.flatnonzero(~ok)
    if bad.size:
        m2, h2, ok2 = _newton_np(np.median(ys[bad], axis=1), ys[bad], m0, v0, nu, s2)
        mode[bad], hess[bad], ok[bad] = m2, h2, ok2
    return mode, hess, ok


def laplace_rows(ys, m0: float, v0: float, nu: float, scale: float = 1.0):
    """Mode, Hessian and convergence flag for every row of ``ys``."""
    ys = np.ascontiguousarray(np.atleast_2d(np.asarray(ys, dtype=float)))
    args = (float(m0), float(v0), float(nu), float(scale) ** 2)
    if USE_NUMBA:
        return _laplace_rows_nb(ys, *args)
    return _laplace_rows_np(ys, *args)


def neg_log_posterior(theta: float, y, prior: Normal, nu: float, scale: float = 1.0):
    """(phi, phi', phi'') at ``theta``; exposed for checking the optimiser."""
    y = as_dataset(y)
    args = (prior.mean, prior.var, float(nu), float(scale) ** 2)
    g, h = _derivs(float(theta), y, *args)
    return _objective(float(theta), y, *args), g, h


def laplace_student_t(prior: Normal, nu: float, y, scale: float = 1.0) -> Analytic:
    if not nu > 0:
        raise ValueError("degrees of freedom must be positive")
    if not isinstance(prior, Normal):
        raise TypeError("Laplace update needs a Normal prior")
    y = as_dataset(y)
    mode, hess, ok = laplace_rows(y[None, :], prior.mean, prior.var, nu, scale)
    if not ok[0]:
        raise ConvergenceError(f"Newton did not converge in {MAX_ITER} iterations (from both starts)")
    return Analytic(Normal(float(mode[0]), 1.0 / float(hess[0])))


@dataclass(frozen=True)
class LaplaceStudentT:
    dof: float = 3.0
    scale: float = 1.0

    def infer(self, belief, y, rng: RngStream | None = None) -> Analytic:
        return laplace_student_t(belief, self.dof, y, self.scale)

    def infer_batch(self, belief, ys, streams: StreamBatch | None = None) -> NormalBatch:
        if not isinstance(belief, Normal):
            raise TypeError("Laplace update needs a Normal prior")
        ys = np.asarray(ys, dtype=float)
        ys = ys[:, None] if ys.ndim == 1 else ys
        mode, hess, ok = laplace_rows(ys, belief.mean, belief.var, self.dof, self.scale)
        var = np.where(ok, 1.0 / np.where(ok, hess, 1.0), 1.0)
        return NormalBatch(np.where(ok, mode, 0.0), var, ~ok)


@dataclass(frozen=True)
class StudentTLocationModel:
    """y_n = theta + scale * t_nu, n = 1..n_obs; one uniform per observation."""

    dof: float = 3.0
    n_obs: int = 5
    scale: float = 1.0

    def simulate(self, theta, rng: RngStream) -> np.ndarray:
        loc = float(np.atleast_1d(theta)[0])
        return StudentT(loc, self.scale, self.dof).quantile(rng.uniform(self.n_obs))

    def simulate_batch(self, thetas, streams: StreamBatch) -> np.ndarray:
        loc = np.asarray(thetas, dtype=float).reshape(len(streams), -1)[:, :1]
        return loc + self.scale * StudentT(0.0, 1.0, self.dof).quantile(streams.uniform(self.n_obs))
