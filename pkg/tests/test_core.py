import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from calib_lab.core import (
    GaussianVector,
    LogNormal,
    Normal,
    NormalMixture,
    RngStream,
    SpdError,
    StreamBatch,
    StudentT,
    Uniform,
    as_dataset,
    as_param,
    cdf,
    derive_seed,
    quantile,
    sample,
    sample_gaussian_vector,
)
from calib_lab.core.rng import philox4x32, uniform_block
from calib_lab.gof import ks_uniform_test

GRID = np.round(np.concatenate([[0.001], np.arange(0.01, 1.0, 0.01), [0.999]]), 3)

finite = dict(allow_nan=False, allow_infinity=False)
normals = st.builds(Normal, st.floats(-50, 50, **finite), st.floats(1e-3, 1e3))
students = st.builds(StudentT, st.floats(-50, 50, **finite), st.floats(1e-2, 1e2), st.floats(0.3, 60))
uniforms = st.tuples(st.floats(-100, 100), st.floats(1e-3, 100)).map(lambda a: Uniform(a[0], a[0] + a[1]))
lognormals = st.builds(LogNormal, st.floats(-3, 3), st.floats(0.05, 2.0))
mixtures = st.builds(NormalMixture, st.floats(0, 1), normals, normals)
any_dist = st.one_of(normals, students, uniforms, lognormals, mixtures)


# ----- examples --------------------------------------------------------------

def test_cdf_examples():
    assert cdf(Normal(0, 1), 0.0) == 0.5
    assert cdf(StudentT(0, 1, 1), 1.0) == pytest.approx(0.75, abs=1e-14)
    assert abs(cdf(Normal(0, 1), 1.959964) - 0.975) < 1e-7


def test_quantile_examples():
    assert quantile(Normal(0, 1), 0.5) == 0.0
    assert quantile(Uniform(0, 1), 0.3) == pytest.approx(0.3, abs=1e-15)
    v = quantile(StudentT(0, 1, 3), 0.95)
    # bisection oracle against the cdf
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if cdf(StudentT(0, 1, 3), mid) < 0.95 else (lo, mid)
    assert v == pytest.approx(lo, abs=1e-9)
    assert cdf(StudentT(0, 1, 3), v) == pytest.approx(0.95, abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_quantile_rejects_outside_open_interval(p):
    with pytest.raises(ValueError):
        quantile(Normal(0, 1), p)


def test_cdf_saturates_outside_support():
    assert cdf(Uniform(0, 1), -3.0) == 0.0
    assert cdf(Uniform(0, 1), 3.0) == 1.0
    assert cdf(LogNormal(0, 1), -1.0) == 0.0


def test_sample_uniform_mean():
    x = sample(Uniform(0, 1), RngStream(1), 100_000)
    assert abs(x.mean() - 0.5) < 0.005


def test_sample_normal_is_quantile_of_uniforms():
    d = Normal(0.3, 2.0)
    x = sample(d, RngStream(5, 9), 1000)
    u = RngStream(5, 9).uniform(1000)
    np.testing.assert_allclose(x, d.quantile(u), rtol=0, atol=0)


def test_sample_mixture_tail_fraction():
    d = NormalMixture(0.9, Normal(0, 1), Normal(5, 1))  # weight is the probability of comp2
    x = sample(d, RngStream(2), 100_000)
    expected = 0.1 * stats.norm.sf(2.5) + 0.9 * stats.norm.sf(2.5 - 5)
    assert abs(np.mean(x > 2.5) - expected) < 0.005
    # mixing weights the other way round
    d = NormalMixture(0.1, Normal(0, 1), Normal(5, 1))
    x = sample(d, RngStream(2), 100_000)
    expected = 0.9 * stats.norm.sf(2.5) + 0.1 * stats.norm.sf(2.5 - 5)
    assert abs(np.mean(x > 2.5) - expected) < 0.005


def test_gaussian_vector_examples():
    g = GaussianVector(np.zeros(2), np.eye(2))
    x = g.sample(RngStream(3), 100_000)
    assert ks_uniform_test(stats.norm.cdf(x[:, 0])).p_value > 1e-3
    assert ks_uniform_test(stats.norm.cdf(x[:, 1])).p_value > 1e-3
    g = GaussianVector(np.array([1.0, -2.0]), np.diag([4.0, 9.0]))
    x = g.sample(RngStream(4), 100_000)
    np.testing.assert_allclose(x.var(axis=0), [4.0, 9.0], rtol=0.05)
    np.testing.assert_allclose(x.mean(axis=0), [1.0, -2.0], atol=3 * np.sqrt(9 / 1e5) * 1.5)
    a = sample_gaussian_vector(g, RngStream(7, 2))
    b = sample_gaussian_vector(g, RngStream(7, 2))
    assert a.tobytes() == b.tobytes()


def test_gaussian_vector_mean_and_cov(np_rng):
    B = np_rng.normal(size=(3, 3))
    cov = B @ B.T + np.eye(3)
    g = GaussianVector(np.array([0.5, 0.0, -1.0]), cov)
    x = g.sample(RngStream(11), 100_000)
    se = np.sqrt(np.diag(cov) / 1e5)
    assert np.all(np.abs(x.mean(axis=0) - g.mean) < 3 * se * 1.2)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.05 * np.max(np.diag(cov)))


@pytest.mark.parametrize("cov", [np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[1.0, 0.5], [0.4, 1.0]]),
                                 -np.eye(2)])
def test_gaussian_vector_rejects_non_spd(cov):
    with pytest.raises(SpdError):
        GaussianVector(np.zeros(2), cov)


def test_gaussian_vector_marginal():
    g = GaussianVector(np.array([0.0, 2.0]), np.diag([1.0, 4.0]))
    m = g.marginal(1)
    assert (m.mean, m.var) == (2.0, 4.0)


@pytest.mark.parametrize("bad", [lambda: Normal(0, 0), lambda: Normal(0, -1), lambda: StudentT(0, 0, 1),
                                 lambda: StudentT(0, 1, 0), lambda: Uniform(1, 1), lambda: LogNormal(0, 0),
                                 lambda: NormalMixture(1.5, Normal(), Normal()), lambda: Normal(np.nan, 1)])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_param_and_dataset_validation():
    assert as_param(1.5).shape == (1,)
    with pytest.raises(ValueError):
        as_param([np.inf])
    with pytest.raises(ValueError):
        as_dataset([])
    with pytest.raises(ValueError):
        as_dataset([1.0, np.nan])


# ----- invariants ------------------------------------------------------------

@given(any_dist)
def test_quantile_cdf_roundtrip(d):
    x = d.quantile(GRID)
    assert np.all(np.abs(d.cdf(x) - GRID) < 1e-9)


@given(any_dist, st.floats(-1e3, 1e3), st.floats(0, 1e3))
def test_cdf_monotone(d, x, h):
    assert d.cdf(x) <= d.cdf(x + h) + 1e-15


@given(any_dist)
def test_pdf_positive_on_support(d):
    x = d.quantile(np.array([0.01, 0.5, 0.99]))
    assert np.all(d.pdf(x) > 0)


@pytest.mark.parametrize("d", [Normal(1, 2), StudentT(0.5, 2, 2.5), Uniform(-1, 3), LogNormal(0.2, 0.7),
                               NormalMixture(0.3, Normal(0, 1), Normal(4, 0.5))])
def test_pit_property(d):
    x = d.sample(RngStream(21), 100_000)
    assert ks_uniform_test(d.cdf(x)).p_value > 1e-3


@pytest.mark.parametrize("d", [Normal(1, 2), StudentT(0.5, 2, 2.5), LogNormal(0.2, 0.7)])
def test_sample_cdf_within_ks_distance(d):
    x = d.sample(RngStream(31), 100_000)
    assert ks_uniform_test(d.cdf(x)).statistic < 0.01


def test_distributions_match_scipy():
    x = np.linspace(-4, 6, 41)
    np.testing.assert_allclose(StudentT(0.5, 2, 2.5).cdf(x), stats.t.cdf(x, 2.5, 0.5, 2), atol=1e-12)
    np.testing.assert_allclose(StudentT(0.5, 2, 2.5).logpdf(x), stats.t.logpdf(x, 2.5, 0.5, 2), atol=1e-12)
    np.testing.assert_allclose(Normal(1, 4).logpdf(x), stats.norm.logpdf(x, 1, 2), atol=1e-12)
    xp = np.linspace(0.1, 6, 20)
    np.testing.assert_allclose(LogNormal(0.2, 0.7).cdf(xp), stats.lognorm.cdf(xp, 0.7, scale=np.exp(0.2)),
                               atol=1e-12)


# ----- random streams --------------------------------------------------------

def test_philox_known_answer():
    # Random123 known-answer vectors for Philox4x32-10
    assert philox4x32(0, 0, 0, 0, 0, 0) == (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)
    ff = 0xFFFFFFFF
    assert philox4x32(ff, ff, ff, ff, ff, ff) == (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)
    assert philox4x32(0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344, 0xA4093822, 0x299F31D0) == \
        (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)


def test_stream_replay_and_independence():
    a = RngStream(42, 7).uniform(1000)
    b = RngStream(42, 7).uniform(1000)
    assert a.tobytes() == b.tobytes()
    c = RngStream(42, 8).uniform(1000)
    assert not np.array_equal(a, c)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.1
    assert np.all((a > 0) & (a < 1))


def test_stream_is_sequential():
    s = RngStream(1, 2)
    x = np.concatenate([s.uniform(3), s.uniform(5), [s.uniform()]])
    np.testing.assert_array_equal(x, RngStream(1, 2).uniform(9))


def test_stream_batch_matches_streams():
    ids = np.array([0, 5, 2**40, 2**63 + 3], dtype=np.uint64)
    sb = StreamBatch(9, ids, 3)
    u = sb.uniform(4)
    v = sb.uniform(2)
    for i, sid in enumerate(ids):
        s = RngStream(9, int(sid), 3)
        np.testing.assert_array_equal(u[i], s.uniform(4))
        np.testing.assert_array_equal(v[i], s.uniform(2))


def test_uniform_block_odd_offsets():
    full = uniform_block(3, [1], 0, 0, 20)[0]
    for off in range(5):
        np.testing.assert_array_equal(uniform_block(3, [1], 0, off, 7)[0], full[off:off + 7])


def test_substreams_and_seeds_differ():
    base = RngStream(1, 1, 0).uniform(8)
    assert not np.array_equal(base, RngStream(1, 1, 1).uniform(8))
    assert not np.array_equal(base, RngStream(2, 1, 0).uniform(8))
    assert derive_seed(5, 1) != derive_seed(5, 2)
    assert derive_seed(5, 1) == derive_seed(5, 1)


def test_uniforms_pass_ks():
    assert ks_uniform_test(RngStream(77).uniform(200_000)).p_value > 1e-3
    across = StreamBatch(77, np.arange(100_000)).uniform(1)[:, 0]
    assert ks_uniform_test(across).p_value > 1e-3


def test_permutation_is_permutation():
    p = RngStream(4).permutation(50)
    assert sorted(p.tolist()) == list(range(50))
