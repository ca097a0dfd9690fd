"""Closed-form univariate laws and Gaussian vectors.

Every scalar law here is regular: positive density on an interval, continuous
strictly increasing cdf, so sampling is done by pushing a uniform draw through
the quantile function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from calib_lab._accel import USE_NUMBA, njit
from calib_lab.core import special
from calib_lab.core.rng import RngStream


class SpdError(ValueError):
    """Covariance matrix is not symmetric positive definite."""


def _check_p(p):
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("quantile requires p strictly inside (0, 1)")
    return arr


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and 0 < self.var < math.inf):
            raise ValueError(f"Normal needs a finite mean and positive variance, got {self.mean}, {self.var}")

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)

    def cdf(self, x):
        return _out(special.ndtr_array((np.asarray(x, dtype=float) - self.mean) / self.sd), x)

    def sf(self, x):
        return _out(special.ndtr_array((self.mean - np.asarray(x, dtype=float)) / self.sd), x)

    def quantile(self, p):
        return _out(self.mean + self.sd * special.ndtri_array(_check_p(p)), p)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return _out(-0.5 * z * z - special.LOG_SQRT_2PI - math.log(self.sd), x)

    def pdf(self, x):
        return _out(np.exp(self.logpdf(x)), x)

    def support(self):
        return (-math.inf, math.inf)

    def sample(self, rng: RngStream, size=None):
        return self.quantile(rng.uniform(size))


@dataclass(frozen=True)
class StudentT:
    loc: float = 0.0
    scale: float = 1.0
    dof: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.loc) and 0 < self.scale < math.inf and self.dof > 0):
            raise ValueError("StudentT needs scale > 0 and dof > 0")

    def cdf(self, x):
        return _out(special.t_cdf_array((np.asarray(x, dtype=float) - self.loc) / self.scale, self.dof), x)

    def quantile(self, p):
        return _out(self.loc + self.scale * special.t_ppf_array(_check_p(p), self.dof), p)

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        c = (math.lgamma(0.5 * (self.dof + 1)) - math.lgamma(0.5 * self.dof)
             - 0.5 * math.log(self.dof * math.pi) - math.log(self.scale))
        return _out(c - 0.5 * (self.dof + 1) * np.log1p(z * z / self.dof), x)

    def pdf(self, x):
        return _out(np.exp(self.logpdf(x)), x)

    def support(self):
        return (-math.inf, math.inf)

    def sample(self, rng: RngStream, size=None):
        return self.quantile(rng.uniform(size))


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError("Uniform needs lo < hi")

    def cdf(self, x):
        return _out(np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0), x)

    def quantile(self, p):
        return _out(self.lo + _check_p(p) * (self.hi - self.lo), p)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0), x)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return _out(np.log(self.pdf(x)), x)

    def support(self):
        return (self.lo, self.hi)

    def sample(self, rng: RngStream, size=None):
        return self.quantile(rng.uniform(size))


@dataclass(frozen=True)
class LogNormal:
    log_mean: float = 0.0
    log_sd: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.log_mean) and 0 < self.log_sd < math.inf):
            raise ValueError("LogNormal needs log_sd > 0")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(np.where(x > 0, x, 1.0)) - self.log_mean) / self.log_sd
        return _out(np.where(x > 0, special.ndtr_array(z), 0.0), x)

    def quantile(self, p):
        return _out(np.exp(self.log_mean + self.log_sd * special.ndtri_array(_check_p(p))), p)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            z = (lx - self.log_mean) / self.log_sd
            val = -0.5 * z * z - special.LOG_SQRT_2PI - math.log(self.log_sd) - lx
        return _out(np.where(x > 0, val, -np.inf), x)

    def pdf(self, x):
        return _out(np.exp(self.logpdf(x)), x)

    def support(self):
        return (0.0, math.inf)

    def sample(self, rng: RngStream, size=None):
        return self.quantile(rng.uniform(size))


@njit
def mixture_cdf(x, w, m1, s1, m2, s2):
    return (1.0 - w) * special.ndtr((x - m1) / s1) + w * special.ndtr((x - m2) / s2)


@njit
def mixture_ppf(p, w, m1, s1, m2, s2):
    """Quantile of (1-w) N(m1, s1^2) + w N(m2, s2^2) by bisection."""
    z = special.ndtri(p)
    a = m1 + s1 * z
    b = m2 + s2 * z
    lo = min(a, b)
    hi = max(a, b)
    if lo == hi:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mixture_cdf(mid, w, m1, s1, m2, s2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit
def _mixture_ppf_loop(p, w, m1, s1, m2, s2):
    out = np.empty(p.size)
    for i in range(p.size):
        out[i] = mixture_ppf(p[i], w[i], m1[i], s1[i], m2[i], s2[i])
    return out


def _mixture_ppf_numpy(p, w, m1, s1, m2, s2):
    z = special.ndtri_array(p)
    a = m1 + s1 * z
    b = m2 + s2 * z
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if not np.any((mid > lo) & (mid < hi)):
            break
        c = (1.0 - w) * special.ndtr_array((mid - m1) / s1) + w * special.ndtr_array((mid - m2) / s2)
        below = c < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def mixture_ppf_array(p, w, m1, s1, m2, s2):
    """Elementwise mixture quantile; all arguments broadcast against ``p``."""
    p = np.asarray(p, dtype=float)
    args = [np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), p.shape)).ravel()
            for a in (w, m1, s1, m2, s2)]
    flat = np.ascontiguousarray(p).ravel()
    if USE_NUMBA:
        return _mixture_ppf_loop(flat, *args).reshape(p.shape)
    return _mixture_ppf_numpy(flat, *args).reshape(p.shape)


@dataclass(frozen=True)
class NormalMixture:
    """``(1 - weight) * comp1 + weight * comp2``; ``weight`` is the probability of ``comp2``."""

    weight: float
    comp1: Normal
    comp2: Normal

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("mixture weight must lie in [0, 1]")

    def _params(self):
        return (self.weight, self.comp1.mean, self.comp1.sd, self.comp2.mean, self.comp2.sd)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out((1 - self.weight) * self.comp1.cdf(x) + self.weight * self.comp2.cdf(x), x)

    def quantile(self, p):
        arr = _check_p(p)
        return _out(mixture_ppf_array(arr, *self._params()), p)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out((1 - self.weight) * self.comp1.pdf(x) + self.weight * self.comp2.pdf(x), x)

    def logpdf(self, x):
        return _out(np.log(self.pdf(x)), x)

    def support(self):
        return (-math.inf, math.inf)

    def sample(self, rng: RngStream, size=None):
        return self.quantile(rng.uniform(size))


ScalarDistribution = Union[Normal, StudentT, Uniform, LogNormal, NormalMixture]
SCALAR_TYPES = (Normal, StudentT, Uniform, LogNormal, NormalMixture)


@dataclass(frozen=True, eq=False)
class GaussianVector:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
            raise SpdError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SpdError("covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, i: int) -> Normal:
        return Normal(float(self.mean[i]), float(self.cov[i, i]))

    def sample(self, rng: RngStream, size=None):
        if size is None:
            return sample_gaussian_vector(self, rng)
        z = rng.normal((int(size), self.dim))
        return self.mean + z @ self.chol.T


# module-level operations -----------------------------------------------------

def cdf(dist, x):
    return dist.cdf(x)


def quantile(dist, p):
    return dist.quantile(p)


def sample(dist, rng: RngStream, size=None):
    """Inverse-cdf draw(s); one uniform from ``rng`` per draw."""
    return dist.sample(rng, size)


def sample_gaussian_vector(g: GaussianVector, rng: RngStream) -> np.ndarray:
    return g.mean + g.chol @ rng.normal(g.dim)
