import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from calib_lab.core import RngStream
from calib_lab.gof import (
    GofResult,
    _perm_mmd_nb,
    _perm_mmd_np,
    chi2_pit_test,
    histogram,
    kolmogorov_sf,
    ks_p_value,
    ks_statistic,
    ks_uniform_test,
    median_bandwidth,
    mmd_permutation_test,
    rank_statistic,
    rank_statistics,
    rank_uniformity_test,
)


def brute_ks(u):
    """sup_x |F_n(x) - x| by evaluating both one-sided limits at every jump."""
    u = np.asarray(u, dtype=float)
    n = u.size
    best = 0.0
    for x in u:
        below = np.sum(u < x) / n
        at = np.sum(u <= x) / n
        best = max(best, abs(at - x), abs(below - x))
    return max(best, abs(1.0 - 1.0))  # F_n(1) = 1 = x at the right end


# ----- KS --------------------------------------------------------------------

def test_ks_examples():
    assert ks_statistic([0.5]) == 0.5
    n = 10
    assert ks_statistic([(2 * i - 1) / (2 * n) for i in range(1, n + 1)]) == pytest.approx(0.05, abs=1e-15)
    assert ks_statistic([0.0] * 4) == 1.0


def test_ks_rejects_bad_input():
    with pytest.raises(ValueError):
        ks_statistic([])
    with pytest.raises(ValueError):
        ks_statistic([0.2, 1.2])
    with pytest.raises(ValueError):
        ks_statistic([np.nan])


def test_ks_matches_brute_force_on_1000_inputs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        u = rng.uniform(size=n)
        if rng.uniform() < 0.2:  # exercise ties and endpoints
            u = np.round(u, 1)
        assert ks_statistic(u) == pytest.approx(brute_ks(u), abs=1e-14)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.randoms())
def test_ks_permutation_invariant(values, r):
    shuffled = list(values)
    r.shuffle(shuffled)
    assert ks_statistic(values) == ks_statistic(shuffled)


def test_ks_p_value_examples():
    assert ks_p_value(0.0, 17) == 1.0
    assert ks_p_value(1.0, 100) < 1e-12
    n = 10**6
    assert ks_p_value(1.3581 / math.sqrt(n), n) == pytest.approx(0.05, abs=0.002)


def test_kolmogorov_series_direct_sum():
    for x in (0.3, 0.8, 1.0, 1.3581, 2.0, 3.0):
        direct = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * x * x) for k in range(1, 200))
        assert kolmogorov_sf(x) == pytest.approx(min(1.0, direct), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 10, 37, 100])
def test_ks_p_value_exact_small_n(n):
    for D in np.linspace(0.01, 0.99, 25):
        assert ks_p_value(D, n) == pytest.approx(stats.kstwo.sf(D, n), abs=2e-9, rel=1e-6)


@pytest.mark.parametrize("n,tol", [(101, 1e-2), (500, 3e-3), (10_000, 1e-3), (10**6, 1e-4)])
def test_ks_p_value_asymptotic(n, tol):
    # the corrected limiting series loses accuracy only near p = 1 at the smallest n
    for D in np.array([0.5, 1.0, 1.36, 1.63, 2.0]) / math.sqrt(n):
        assert ks_p_value(D, n) == pytest.approx(stats.kstwo.sf(D, n), abs=tol)
    for D in np.array([1.36, 1.63, 2.0]) / math.sqrt(n):
        assert ks_p_value(D, n) == pytest.approx(stats.kstwo.sf(D, n), rel=0.05)


@given(st.integers(1, 2000), st.floats(0, 1), st.floats(0, 1))
def test_ks_p_value_monotone(n, a, b):
    lo, hi = sorted((a, b))
    assert ks_p_value(hi, n) <= ks_p_value(lo, n) + 1e-12


def test_ks_null_p_values_uniform():
    rng = RngStream(3)
    ps = [ks_uniform_test(rng.uniform(200)).p_value for _ in range(400)]
    assert ks_uniform_test(ps).p_value > 0.01


# ----- chi-squared on PIT normal scores --------------------------------------

def test_chi2_examples():
    r = chi2_pit_test([0.5] * 7)
    assert r.statistic == 0.0
    assert r.p_value < 1e-10
    assert chi2_pit_test([stats.norm.cdf(1.0)]).statistic == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("bad", [[0.0, 0.5], [0.5, 1.0], []])
def test_chi2_rejects_degenerate(bad):
    with pytest.raises(ValueError):
        chi2_pit_test(bad)


def test_chi2_null_moments():
    u = RngStream(10).uniform((10_000, 50))
    T = np.array([chi2_pit_test(row).statistic for row in u])
    assert abs(T.mean() - 50) < 1
    assert abs(T.var() - 100) < 10


@given(st.lists(st.floats(1e-9, 1 - 1e-9), min_size=1, max_size=30))
def test_chi2_reflection_invariant(pits):
    a = chi2_pit_test(pits)
    b = chi2_pit_test([1 - p for p in pits])
    assert a.statistic == pytest.approx(b.statistic, rel=1e-6)


def test_chi2_two_sided():
    under = chi2_pit_test(np.full(200, 0.5) + np.linspace(-0.05, 0.05, 200))
    over = chi2_pit_test(np.concatenate([np.full(100, 1e-4), np.full(100, 1 - 1e-4)]))
    assert under.p_value < 1e-6 and over.p_value < 1e-6


# ----- ranks -----------------------------------------------------------------

def test_rank_examples():
    assert rank_statistic([5, 6, 7], 1) == 0
    assert rank_statistic([1, 2, 3], 9) == 3
    assert rank_statistic([1, 3, 5], 4) == 2
    assert rank_statistic([1, 2, 2, 3], 2) == 1  # ties count as not below


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30, unique=True), st.floats(-100, 100))
def test_rank_reflection(ens, v):
    if v in ens:
        return
    M = len(ens)
    assert rank_statistic(ens, v) + rank_statistic([-e for e in ens], -v) == M


def test_rank_statistics_rowwise(np_rng):
    ens = np_rng.normal(size=(30, 9))
    vals = np_rng.normal(size=30)
    assert rank_statistics(ens, vals).tolist() == [rank_statistic(e, v) for e, v in zip(ens, vals)]


def test_rank_uniformity_examples():
    M, B = 99, 20
    balanced = np.repeat(np.arange(0, 100, 5), 10)
    h, r = rank_uniformity_test(balanced, M, B)
    assert r.statistic == 0 and r.p_value == 1.0
    assert h.counts.sum() == balanced.size and (h.M, h.B) == (M, B)
    _, r = rank_uniformity_test(np.zeros(100, dtype=int), 99, 10)
    assert r.statistic == pytest.approx(900.0)


def test_rank_uniformity_errors():
    with pytest.raises(ValueError):
        rank_uniformity_test(np.zeros(500, dtype=int), 100, 20)
    with pytest.raises(ValueError):
        rank_uniformity_test(np.zeros(50, dtype=int), 99, 20)
    with pytest.raises(ValueError):
        rank_uniformity_test(np.full(200, 120), 99, 20)


def test_rank_uniformity_null_p_uniform():
    rng = RngStream(0)
    ps = []
    for _ in range(200):
        ranks = np.minimum((rng.uniform(10_000) * 100).astype(int), 99)
        ps.append(rank_uniformity_test(ranks, 99, 20)[1].p_value)
    assert ks_uniform_test(ps).p_value > 0.01


# ----- MMD -------------------------------------------------------------------

def test_mmd_identical_samples():
    X = RngStream(5).normal((50, 2))
    r = mmd_permutation_test(X, X.copy(), 0.0, 199, RngStream(1))
    assert r.statistic == pytest.approx(0.0, abs=1e-15)
    assert r.p_value == 1.0


def test_mmd_null_p_uniform():
    ps = []
    for s in range(200):
        X = RngStream(s, 0).normal((500, 1))
        Y = RngStream(s, 1).normal((500, 1))
        ps.append(mmd_permutation_test(X, Y, 0.0, 199, RngStream(s, 2)).p_value)
    assert ks_uniform_test(ps).p_value > 0.01


def test_mmd_detects_mean_shift():
    X = RngStream(6, 0).normal((500, 1))
    Y = 3.0 + RngStream(6, 1).normal((500, 1))
    r = mmd_permutation_test(X, Y, 0.0, 999, RngStream(6, 2))
    assert r.p_value <= 1 / 1000


def test_mmd_symmetric_in_samples():
    X = RngStream(7, 0).normal((40, 2))
    Y = 0.3 + RngStream(7, 1).normal((60, 2))
    a = mmd_permutation_test(X, Y, 0.0, 499, RngStream(9))
    b = mmd_permutation_test(Y, X, 0.0, 499, RngStream(9))
    assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
    assert abs(a.p_value - b.p_value) <= 2 / 500


def test_mmd_statistic_is_biased_v_statistic():
    X = np.array([[0.0], [1.0]])
    Y = np.array([[0.5], [2.0], [3.0]])
    bw = 0.7
    k = lambda a, b: math.exp(-((a - b) ** 2) / (2 * bw * bw))  # noqa: E731
    xs, ys = X[:, 0], Y[:, 0]
    want = (sum(k(a, b) for a in xs for b in xs) / 4 + sum(k(a, b) for a in ys for b in ys) / 9
            - 2 * sum(k(a, b) for a in xs for b in ys) / 6)
    assert mmd_permutation_test(X, Y, bw, 9, RngStream(0)).statistic == pytest.approx(want, rel=1e-12)


def test_mmd_errors():
    with pytest.raises(ValueError):
        mmd_permutation_test(np.zeros((5, 2)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        mmd_permutation_test(np.zeros((1, 1)), np.zeros((5, 1)))


def test_mmd_permutation_kernels_agree(np_rng):
    Z = np_rng.normal(size=(30, 2))
    K = np.exp(-((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1))
    perms = np.argsort(np_rng.uniform(size=(50, 30)), axis=1)
    np.testing.assert_allclose(_perm_mmd_nb(K, perms, 12), _perm_mmd_np(K, perms, 12), rtol=1e-10, atol=1e-14)


def test_median_bandwidth():
    Z = np.array([[0.0], [1.0], [3.0]])
    assert median_bandwidth(Z) == pytest.approx(2.0)
    assert median_bandwidth(np.zeros((4, 1))) == 1.0


# ----- misc ------------------------------------------------------------------

def test_gof_result_validates_p():
    with pytest.raises(ValueError):
        GofResult("x", 0.0, 1.5, 3)


def test_histogram_is_deterministic_rebinning(np_rng):
    u = np_rng.uniform(size=1000)
    c, e = histogram(u, 20)
    assert c.sum() == 1000 and e.size == 21
    np.testing.assert_array_equal(c, np.bincount(np.minimum((u * 20).astype(int), 19), minlength=20))
