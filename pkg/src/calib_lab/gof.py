"""Goodness-of-fit statistics and p-values.

KS uniformity, the sum-of-squared-normal-scores PIT test, discrete-uniform
rank tests and a Gaussian-kernel MMD permutation test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from calib_lab._accel import USE_NUMBA, njit
from calib_lab.core import special
from calib_lab.core.rng import RngStream


@dataclass(frozen=True)
class GofResult:
    test_name: str
    statistic: float
    p_value: float
    sample_size: int

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True)
class RankHistogram:
    counts: np.ndarray
    M: int
    B: int


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

@njit
def _ks_sorted_nb(u):
    n = u.size
    d = 0.0
    for i in range(n):
        hi = (i + 1) / n - u[i]
        lo = u[i] - i / n
        if hi > d:
            d = hi
        if lo > d:
            d = lo
    return d


def _ks_nb(values):
    # numpy's sort is several times faster than numba's; only the scan is compiled
    return _ks_sorted_nb(np.sort(values))


def _ks_np(values):
    u = np.sort(values)
    n = u.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def ks_statistic(values) -> float:
    """sup_x |F_n(x) - x| for values in [0, 1]."""
    u = np.ascontiguousarray(values, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("ks_statistic needs at least one value")
    if np.any((u < 0.0) | (u > 1.0)) or np.any(np.isnan(u)):
        raise ValueError("ks_statistic values must lie in [0, 1]")
    return float(_ks_nb(u)) if USE_NUMBA else _ks_np(u)


def _mtw_cdf(n: int, d: float) -> float:
    """P(D_n < d), Marsaglia, Tsang & Wang (2003)."""
    k = int(n * d) + 1
    m = 2 * k - 1
    h = k - n * d
    i = np.arange(m)
    H = (i[:, None] - i[None, :] + 1 >= 0).astype(float)
    H[:, 0] -= h ** (i + 1.0)
    H[m - 1, :] -= h ** (m - i.astype(float))
    if 2 * h - 1 > 0:
        H[m - 1, 0] += (2 * h - 1) ** m
    diff = i[:, None] - i[None, :] + 1
    fact = np.array([math.lgamma(v + 1.0) if v > 0 else 0.0 for v in diff.ravel()]).reshape(diff.shape)
    H = np.where(diff > 0, H * np.exp(-fact), H)

    # matrix power with explicit base-10 exponent bookkeeping
    def mpow(A, eA, p):
        if p == 1:
            return A.copy(), eA
        B, eB = mpow(A, eA, p // 2)
        B = B @ B
        eB = 2 * eB
        if p % 2:
            B = A @ B
            eB += eA
        if B[k - 1, k - 1] > 1e140:
            B *= 1e-140
            eB += 140
        return B, eB

    Q, eQ = mpow(H, 0, n)
    s = Q[k - 1, k - 1]
    for j in range(1, n + 1):
        s = s * j / n
        if s < 1e-140:
            s *= 1e140
            eQ -= 140
    return float(s * 10.0 ** eQ)


def _smirnov_onesided_sf(n: int, d: float) -> float:
    # P(D_n^+ >= d), Birnbaum & Tingey (1951)
    total = 0.0
    for j in range(int(math.floor(n * (1 - d))) + 1):
        a = 1 - d - j / n
        b = d + j / n
        if a <= 0:
            continue
        lt = (math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
              + (n - j) * math.log(a) + (j - 1) * math.log(b))
        total += math.exp(lt)
    return d * total


def kolmogorov_sf(x: float) -> float:
    """1 - K(x) for the limiting Kolmogorov distribution."""
    if x <= 0.05:
        return 1.0  # K(0.05) is below 1e-300
    if x < 1.0:
        # theta-function form converges fast for small x
        s = 0.0
        c = math.pi ** 2 / (8 * x * x)
        for k in range(1, 60, 2):
            s += math.exp(-k * k * c)
        return 1.0 - math.sqrt(2 * math.pi) / x * s
    s = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * x * x)
        s += term if k % 2 else -term
        if term < 1e-300:
            break
    return min(1.0, 2.0 * s)


def ks_p_value(D: float, n: int) -> float:
    """Upper-tail p-value of the one-sample KS statistic.

    Exact (matrix method) for n <= 100, refined by the one-sided tail bound
    once p drops below 1e-8; above n = 100 the limiting series with the
    (sqrt(n) + 0.12 + 0.11/sqrt(n)) correction.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if D <= 0:
        return 1.0
    if D >= 1:
        return 0.0
    if n <= 100:
        if D <= 0.5 / n:
            return 1.0
        p = 1.0 - _mtw_cdf(n, D)
        if p < 1e-8:
            p = 2.0 * _smirnov_onesided_sf(n, D)
        return float(min(max(p, 0.0), 1.0))
    sn = math.sqrt(n)
    return float(min(max(kolmogorov_sf((sn + 0.12 + 0.11 / sn) * D), 0.0), 1.0))


def ks_uniform_test(values) -> GofResult:
    u = np.asarray(values, dtype=float).ravel()
    D = ks_statistic(u)
    return GofResult("ks", D, ks_p_value(D, u.size), u.size)


# ---------------------------------------------------------------------------
# chi-squared test on normal scores of PIT values
# ---------------------------------------------------------------------------

def chi2_pit_test(pits) -> GofResult:
    """T = sum(Phi^{-1}(pit)^2) against chi^2_n, two-sided."""
    u = np.asarray(pits, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("chi2_pit_test needs at least one PIT value")
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("PIT values must lie strictly inside (0, 1); clamp or reject first")
    z = special.ndtri_array(u)
    T = float(np.sum(z * z))
    lower = special.chi2_cdf(T, float(u.size))
    upper = special.chi2_sf(T, float(u.size))
    return GofResult("chi2-pit", T, float(min(1.0, 2.0 * min(lower, upper))), u.size)


# ---------------------------------------------------------------------------
# ranks
# ---------------------------------------------------------------------------

def rank_statistic(ensemble, value: float) -> int:
    """Number of ensemble members strictly below ``value``."""
    e = np.asarray(ensemble, dtype=float).ravel()
    if e.size < 1:
        raise ValueError("ensemble must be non-empty")
    return int(np.count_nonzero(e < value))


def rank_statistics(ensembles: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise ranks: ``ensembles`` is (n, M), ``values`` is (n,)."""
    return np.count_nonzero(np.asarray(ensembles) < np.asarray(values)[:, None], axis=1)


def rank_uniformity_test(ranks, M: int, B: int = 20):
    """Pearson chi^2 test of ranks in {0..M} against the discrete uniform, B bins."""
    r = np.asarray(ranks).ravel().astype(np.int64)
    if (M + 1) % B != 0:
        raise ValueError(f"bin count B={B} must divide M+1={M + 1}")
    if r.size < 5 * B:
        raise ValueError(f"need at least {5 * B} ranks for B={B} bins, got {r.size}")
    if np.any((r < 0) | (r > M)):
        raise ValueError("ranks must lie in {0, ..., M}")
    bins = (r * B) // (M + 1)
    counts = np.bincount(bins, minlength=B)
    expected = r.size / B
    stat = float(np.sum((counts - expected) ** 2) / expected)
    p = special.chi2_sf(stat, float(B - 1))
    return RankHistogram(counts, M, B), GofResult("rank-chi2", stat, float(min(max(p, 0.0), 1.0)), r.size)


# ---------------------------------------------------------------------------
# MMD
# ---------------------------------------------------------------------------

def _sqdist(Z):
    sq = np.sum(Z * Z, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def median_bandwidth(Z: np.ndarray) -> float:
    d = _sqdist(np.asarray(Z, dtype=float))
    iu = np.triu_indices(d.shape[0], 1)
    med = float(np.sqrt(np.median(d[iu])))
    return med if med > 0 else 1.0


@njit
def _perm_mmd_nb(K, perms, n1):
    N = K.shape[0]
    n2 = N - n1
    out = np.empty(perms.shape[0])
    group = np.empty(N, dtype=np.int8)
    for p in range(perms.shape[0]):
        for j in range(N):
            group[perms[p, j]] = 0 if j < n1 else 1
        sxx = 0.0
        syy = 0.0
        sxy = 0.0
        for a in range(N):
            ga = group[a]
            row = K[a]
            for b in range(N):
                if ga == group[b]:
                    if ga == 0:
                        sxx += row[b]
                    else:
                        syy += row[b]
                else:
                    sxy += row[b]
        out[p] = sxx / (n1 * n1) + syy / (n2 * n2) - sxy / (n1 * n2)
    return out


def _perm_mmd_np(K, perms, n1):
    N = K.shape[0]
    n2 = N - n1
    out = np.empty(perms.shape[0])
    step = 128
    for s in range(0, perms.shape[0], step):
        P = perms[s:s + step]
        W = np.full(P.shape, -1.0 / n2)
        rows = np.arange(P.shape[0])[:, None]
        W[rows, P[:, :n1]] = 1.0 / n1
        out[s:s + step] = np.einsum("ij,ij->i", W @ K, W)
    return out


# the BLAS formulation beats the numba loop at every size tried (see benchmarks/),
# so it is the default under both backends
_perm_mmd = _perm_mmd_np


def _mmd2(K, n1):
    n2 = K.shape[0] - n1
    return float(K[:n1, :n1].sum() / n1 ** 2 + K[n1:, n1:].sum() / n2 ** 2 - 2.0 * K[:n1, n1:].sum() / (n1 * n2))


def mmd_permutation_test(X, Y, bandwidth: float = 0.0, n_perm: int = 999, rng: RngStream | None = None) -> GofResult:
    """Biased MMD^2 with a Gaussian kernel, permutation p-value.

    ``bandwidth=0`` uses the median pairwise distance of the pooled sample.
    The pooled sample is put in a canonical order and the smaller group always
    takes the first slots of each permutation, so swapping X and Y gives the
    same permutation distribution.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    Y = Y[:, None] if Y.ndim == 1 else Y
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise ValueError("each sample needs at least two points")
    if bandwidth < 0:
        raise ValueError("bandwidth must be positive, or 0 for the median heuristic")
    if rng is None:
        rng = RngStream(0)
    small, large = (X, Y) if X.shape[0] <= Y.shape[0] else (Y, X)
    n1 = small.shape[0]
    Z = np.vstack([small, large])
    bw = median_bandwidth(Z) if bandwidth == 0 else float(bandwidth)
    K = np.exp(-_sqdist(Z) / (2.0 * bw * bw))
    stat = max(_mmd2(K, n1), 0.0)

    order = np.lexsort(Z.T[::-1])
    Kc = np.ascontiguousarray(K[np.ix_(order, order)])
    u = rng.uniform((int(n_perm), Z.shape[0]))
    perms = np.argsort(u, axis=1, kind="stable")
    perm_stats = _perm_mmd(Kc, perms, n1)
    tol = 1e-12 * max(abs(stat), 1e-300)
    exceed = int(np.count_nonzero(perm_stats >= stat - tol))
    p = (1 + exceed) / (n_perm + 1)
    return GofResult("mmd", stat, float(p), X.shape[0] + Y.shape[0])


# ---------------------------------------------------------------------------

def histogram(values, bins: int = 20, lo: float = 0.0, hi: float = 1.0):
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=(lo, hi))
    return counts, edges
