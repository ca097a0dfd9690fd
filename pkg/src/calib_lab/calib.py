"""Calibration harness: hierarchical simulation and the strong/weak tests.

Replicate ``i`` draws everything from streams with ``stream_id = i`` under
the experiment's master seed, one substream per purpose:

    SUB_THETA   theta_i ~ mu0
    SUB_DATA    y_i ~ P_theta_i
    SUB_PROC    the learning procedure's own randomness
    SUB_DRAW    the single draw from the output used by the weak test
    SUB_REF     fresh mu0 draws for the MMD reference sample
    SUB_PIT     uniforms for randomised PITs at point masses
    SUB_GLOBAL  (stream 0) randomness not tied to a replicate, e.g. permutations

Replicates are processed in fixed chunks, optionally on a thread pool; since
every chunk only reads its own streams, results do not depend on the thread
count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from calib_lab.core.distributions import SCALAR_TYPES, GaussianVector
from calib_lab.core.rng import RngStream, StreamBatch
from calib_lab.core.types import (
    AbcExhausted,
    CalibrationError,
    Empirical,
    EmpiricalBatch,
    GaussianBatch,
    GridGaussian,
    ListBatch,
    NormalBatch,
    infer_batch,
    simulate_batch,
)
from calib_lab.gof import (
    GofResult,
    RankHistogram,
    chi2_pit_test,
    histogram,
    ks_uniform_test,
    mmd_permutation_test,
    rank_statistics,
    rank_uniformity_test,
)
from calib_lab.testfn import marginal_law, pushforward_cdf_batch

SUB_THETA, SUB_DATA, SUB_PROC, SUB_DRAW, SUB_REF, SUB_PIT, SUB_GLOBAL = range(7)
CHUNK = 4096
PIT_CLAMP = 1e-12


class SimulationFailure(CalibrationError):
    """Too many replicates failed (non-convergence, exhausted proposals, ...)."""

    def __init__(self, message: str, failures: int, n: int):
        super().__init__(message)
        self.failures = failures
        self.n = n


@dataclass(frozen=True, eq=False)
class HierarchicalSample:
    theta: np.ndarray
    y: np.ndarray
    replicate_id: int


@dataclass(frozen=True, eq=False)
class HierarchicalBatch:
    """Rows of ``thetas`` (n, d) and ``ys`` (n, N) for replicates ``ids``."""

    thetas: np.ndarray
    ys: np.ndarray
    ids: np.ndarray

    def __len__(self):
        return self.ids.size

    def samples(self) -> list:
        return [HierarchicalSample(self.thetas[i], self.ys[i], int(self.ids[i])) for i in range(len(self))]

    @classmethod
    def from_samples(cls, samples: Sequence[HierarchicalSample]) -> "HierarchicalBatch":
        return cls(np.stack([np.atleast_1d(s.theta) for s in samples]),
                   np.stack([np.atleast_1d(s.y) for s in samples]),
                   np.array([s.replicate_id for s in samples], dtype=np.int64))

    def take(self, idx) -> "HierarchicalBatch":
        return HierarchicalBatch(self.thetas[idx], self.ys[idx], self.ids[idx])


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    mode: str  # strong | strong-rank | weak | weak-mmd
    gof: GofResult
    values: np.ndarray  # PITs, ranks, or pushforward PITs against the reference sample
    histogram: np.ndarray
    n_replicates: int
    seed: int
    failures: int = 0
    bin_edges: Optional[np.ndarray] = None
    rank_histogram: Optional[RankHistogram] = None
    extra: dict = field(default_factory=dict)

    @property
    def p_value(self) -> float:
        return self.gof.p_value

    @property
    def statistic(self) -> float:
        return self.gof.statistic


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------

def sample_beliefs(belief, streams: StreamBatch) -> np.ndarray:
    """One draw per stream from ``belief``, as an (n, d) array."""
    n = len(streams)
    if hasattr(belief, "sample_batch"):
        return np.asarray(belief.sample_batch(streams), dtype=float).reshape(n, -1)
    if isinstance(belief, SCALAR_TYPES):
        return np.asarray(belief.quantile(streams.uniform(1)[:, 0]), dtype=float).reshape(n, 1)
    if isinstance(belief, GaussianVector):
        return belief.mean + streams.normal(belief.dim) @ belief.chol.T
    return np.stack([np.atleast_1d(np.asarray(belief.sample(streams.stream(i)), dtype=float))
                     for i in range(n)])


def _sample_output(out, rng: RngStream) -> np.ndarray:
    if isinstance(out, Empirical):
        j = min(int(rng.uniform() * out.size), out.size - 1)
        return out.samples[j]
    dist = out.dist
    if isinstance(dist, GridGaussian):
        return dist.mean + np.sqrt(np.maximum(dist.var, 0.0)) * rng.normal(dist.dim)
    return np.atleast_1d(np.asarray(dist.sample(rng), dtype=float))


def sample_outputs(batch, streams: StreamBatch) -> np.ndarray:
    """One draw from each replicate's output, as an (n, d) array (nan rows where failed)."""
    n = len(streams)
    if isinstance(batch, NormalBatch):
        sd = np.sqrt(np.where(np.isfinite(batch.var) & (batch.var > 0), batch.var, 1.0))
        return (batch.mean + sd * streams.normal(1)[:, 0]).reshape(n, 1)
    if isinstance(batch, GaussianBatch):
        d = batch.mean.shape[1]
        z = streams.normal(d)
        if batch.cov is None:
            return batch.mean + np.sqrt(np.maximum(batch.var, 0.0)) * z
        cov = np.asarray(batch.cov)
        if cov.ndim == 2:
            return batch.mean + z @ np.linalg.cholesky(cov).T
        return batch.mean + np.einsum("nij,nj->ni", np.linalg.cholesky(cov), z)
    if isinstance(batch, EmpiricalBatch):
        M = batch.samples.shape[1]
        j = np.minimum((streams.uniform(1)[:, 0] * M).astype(np.int64), M - 1)
        return batch.samples[np.arange(n), j]
    if isinstance(batch, ListBatch):
        return np.stack([_sample_output(o, streams.stream(i)) for i, o in enumerate(batch.outputs)])
    raise TypeError(f"cannot sample from {type(batch).__name__}")


def _failed(batch, n: int) -> np.ndarray:
    failed = getattr(batch, "failed", None)
    return np.zeros(n, dtype=bool) if failed is None else np.asarray(failed, dtype=bool)


def _simulate(belief, model, ids: np.ndarray, seed: int) -> HierarchicalBatch:
    thetas = sample_beliefs(belief, StreamBatch(seed, ids, SUB_THETA))
    ys = np.asarray(simulate_batch(model, thetas, StreamBatch(seed, ids, SUB_DATA)), dtype=float)
    return HierarchicalBatch(thetas, ys.reshape(ids.size, -1), ids)


def _chunks(n: int, start: int = 0):
    return [np.arange(s, min(s + CHUNK, start + n), dtype=np.int64) for s in range(start, start + n, CHUNK)]


def _map_chunks(work, n: int, threads: int = 1, start: int = 0):
    chunks = _chunks(n, start)
    if threads <= 1 or len(chunks) == 1:
        return [work(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, chunks))


def _check_failures(failed: np.ndarray, max_failure_rate: float, what: str):
    k = int(np.count_nonzero(failed))
    if k > max_failure_rate * failed.size:
        raise SimulationFailure(f"{k} of {failed.size} replicates failed ({what})", k, failed.size)
    return k


def _pit_report(mode, pits, seed, failures, bins, extra=None) -> CalibrationReport:
    counts, edges = histogram(pits, bins)
    return CalibrationReport(mode, ks_uniform_test(pits), pits, counts, pits.size, seed, failures,
                             edges, extra=extra or {})


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def simulate_hierarchical(belief, model, n: int, seed: int = 0, threads: int = 1) -> list:
    """n pairs theta_i ~ mu0, y_i ~ P_theta_i; replicate i uses stream id i."""
    return simulate_hierarchical_batch(belief, model, n, seed, threads).samples()


def simulate_hierarchical_batch(belief, model, n: int, seed: int = 0, threads: int = 1,
                                start: int = 0) -> HierarchicalBatch:
    if n < 1:
        raise ValueError("need at least one replicate")
    parts = _map_chunks(lambda ids: _simulate(belief, model, ids, seed), n, threads, start)
    return HierarchicalBatch(np.concatenate([p.thetas for p in parts]),
                             np.concatenate([p.ys for p in parts]),
                             np.concatenate([p.ids for p in parts]))


def strong_pits(proc, belief, sample: HierarchicalBatch, fs: Sequence, seed: int):
    """PITs of each test function in ``fs`` (array (len(fs), n)) plus the failure mask."""
    ids = sample.ids
    out = infer_batch(proc, belief, sample.ys, StreamBatch(seed, ids, SUB_PROC))
    tie_u = StreamBatch(seed, ids, SUB_PIT).uniform(1)[:, 0]
    pits = np.stack([pushforward_cdf_batch(out, f, f.apply_batch(sample.thetas), tie_u) for f in fs])
    return pits, _failed(out, ids.size)


def strong_test(proc, belief, model, f, n: int, seed: int = 0, threads: int = 1, bins: int = 20,
                max_failure_rate: float = 1e-3) -> CalibrationReport:
    """KS test of PIT_i = F_{f# mu(mu0, y_i)}(f(theta_i)) against U(0, 1)."""
    return strong_test_many(proc, belief, model, [f], n, seed, threads, bins, max_failure_rate)[0]


def strong_test_many(proc, belief, model, fs: Sequence, n: int, seed: int = 0, threads: int = 1,
                     bins: int = 20, max_failure_rate: float = 1e-3, bonferroni: bool = False) -> list:
    """One strong test per test function on shared replicates; optional Bonferroni adjustment."""
    if n < 1:
        raise ValueError("need at least one replicate")

    def work(ids):
        return strong_pits(proc, belief, _simulate(belief, model, ids, seed), fs, seed)

    parts = _map_chunks(work, n, threads)
    pits = np.concatenate([p for p, _ in parts], axis=1)
    failed = np.concatenate([m for _, m in parts])
    k = _check_failures(failed, max_failure_rate, "strong test")
    reports = []
    for j, f in enumerate(fs):
        rep = _pit_report("strong", pits[j, ~failed], seed, k, bins, {"test_function": repr(f)})
        if bonferroni and len(fs) > 1:
            g = rep.gof
            adj = GofResult(g.test_name, g.statistic, min(1.0, g.p_value * len(fs)), g.sample_size)
            rep = CalibrationReport(rep.mode, adj, rep.values, rep.histogram, rep.n_replicates, seed, k,
                                    rep.bin_edges, extra={**rep.extra, "bonferroni": len(fs)})
        reports.append(rep)
    return reports


def strong_rank_test(proc, belief, model, f, n: int, M: int, B: int = 20, seed: int = 0,
                     threads: int = 1, max_failure_rate: float = 0.0) -> CalibrationReport:
    """Discrete-uniform test of r_i = #{m : f(theta_i^m) < f(theta_i)} for empirical outputs."""
    if (M + 1) % B != 0:
        raise ValueError(f"bin count B={B} must divide M+1={M + 1}")

    def work(ids):
        sample = _simulate(belief, model, ids, seed)
        out = infer_batch(proc, belief, sample.ys, StreamBatch(seed, ids, SUB_PROC))
        if not isinstance(out, EmpiricalBatch):
            raise TypeError("the rank test needs empirical (sample-based) outputs")
        if out.samples.shape[1] != M:
            raise ValueError(f"procedure returned {out.samples.shape[1]} samples, expected M={M}")
        failed = _failed(out, ids.size)
        d = out.samples.shape[2]
        ens = f.apply_batch(np.nan_to_num(out.samples).reshape(-1, d)).reshape(ids.size, M)
        ranks = rank_statistics(ens, f.apply_batch(sample.thetas))
        props = out.proposals if out.proposals is not None else np.zeros(ids.size, dtype=np.int64)
        return ranks, failed, props

    parts = _map_chunks(work, n, threads)
    ranks = np.concatenate([r for r, _, _ in parts])
    failed = np.concatenate([m for _, m, _ in parts])
    props = np.concatenate([p for _, _, p in parts])
    k = int(np.count_nonzero(failed))
    if k > max_failure_rate * n:
        accepted = M * (n - k)
        rate = accepted / max(int(props.sum()), 1)
        raise AbcExhausted(f"{k} of {n} replicates ran out of proposals", rate, int(np.flatnonzero(failed)[0]))
    ranks = ranks[~failed]
    rh, gof = rank_uniformity_test(ranks, M, B)
    extra = {"test_function": repr(f)}
    if props.sum() > 0:
        extra["acceptance_rate"] = M * ranks.size / float(props.sum())
    edges = np.arange(B + 1) * (M + 1) / B
    return CalibrationReport("strong-rank", gof, ranks, rh.counts, ranks.size, seed, k, edges, rh, extra)


def weak_draws(proc, belief, model, n: int, seed: int = 0, threads: int = 1):
    """vartheta_i ~ mu(mu0, y_i) for n hierarchical replicates, (n, d), plus the failure mask."""

    def work(ids):
        sample = _simulate(belief, model, ids, seed)
        out = infer_batch(proc, belief, sample.ys, StreamBatch(seed, ids, SUB_PROC))
        failed = _failed(out, ids.size)
        draws = sample_outputs(out, StreamBatch(seed, ids, SUB_DRAW))
        return draws, failed

    parts = _map_chunks(work, n, threads)
    return np.concatenate([d for d, _ in parts]), np.concatenate([m for _, m in parts])


def weak_test(proc, belief, model, f, n: int, seed: int = 0, threads: int = 1, bins: int = 20,
              max_failure_rate: float = 1e-3) -> CalibrationReport:
    """KS test of F_{f# mu0}(f(vartheta_i)) against U(0, 1)."""
    law = marginal_law(belief, f)
    draws, failed = weak_draws(proc, belief, model, n, seed, threads)
    k = _check_failures(failed, max_failure_rate, "weak test")
    pits = np.asarray(law.cdf(f.apply_batch(draws[~failed])), dtype=float)
    return _pit_report("weak", pits, seed, k, bins, {"test_function": repr(f)})


def weak_mmd_test(proc, belief, model, n: int, n_perm: int = 999, seed: int = 0, threads: int = 1,
                  reference=None, bandwidth: float = 0.0, bins: int = 20,
                  max_failure_rate: float = 1e-3) -> CalibrationReport:
    """MMD two-sample test of {vartheta_i} against n fresh draws from mu0.

    ``reference`` is the sampler for mu0 when the procedure needs a different
    handle on the belief (for example a closed form while the reference is
    only available by simulation); it defaults to ``belief``.
    """
    reference = belief if reference is None else reference
    draws, failed = weak_draws(proc, belief, model, n, seed, threads)
    k = _check_failures(failed, max_failure_rate, "weak MMD test")
    X = draws[~failed]
    ids = np.arange(n, dtype=np.int64)
    Y = np.concatenate([sample_beliefs(reference, StreamBatch(seed, c, SUB_REF)) for c in _chunks(n)])
    gof = mmd_permutation_test(X, Y, bandwidth, n_perm, RngStream(seed, 0, SUB_GLOBAL))
    # visual summary: where each vartheta falls among the reference draws (first coordinate)
    ref = np.sort(Y[:, 0])
    u = (np.searchsorted(ref, X[:, 0], side="left") + 0.5) / (ref.size + 1)
    counts, edges = histogram(u, bins)
    return CalibrationReport("weak-mmd", gof, X, counts, X.shape[0], seed, k, edges,
                             extra={"n_reference": int(ids.size)})


def _as_batch(S) -> HierarchicalBatch:
    if isinstance(S, HierarchicalBatch):
        return S
    return HierarchicalBatch.from_samples(list(S))


def clamp_pits(pits: np.ndarray) -> np.ndarray:
    pits = np.asarray(pits, dtype=float)
    bad = (pits < PIT_CLAMP) | (pits > 1.0 - PIT_CLAMP)
    if bad.any():
        warnings.warn(f"{int(bad.sum())} PIT values clamped to [{PIT_CLAMP}, 1 - {PIT_CLAMP}]",
                      RuntimeWarning, stacklevel=3)
    return np.clip(pits, PIT_CLAMP, 1.0 - PIT_CLAMP)


def chi2_pvalues(proc, belief, S, candidates: Sequence, seed: int = 0) -> np.ndarray:
    """Two-sided chi^2 PIT p-value of every candidate test function on the sample S."""
    S = _as_batch(S)
    pits, failed = strong_pits(proc, belief, S, candidates, seed)
    if failed.any():
        pits = pits[:, ~failed]
    return np.array([chi2_pit_test(clamp_pits(row)).p_value for row in pits])


def select_test_function(candidates: Sequence, S1, proc, belief, seed: int = 0):
    """The candidate with the smallest chi^2 PIT p-value on S1 (ties go to the lowest index).

    Only S1 is seen here; a valid test then evaluates the chosen function on
    an independent S2.
    """
    if len(candidates) == 0:
        raise ValueError("no candidate test functions")
    S1 = _as_batch(S1)
    if len(S1) < 2:
        raise ValueError("selection needs at least two replicates")
    pvals = chi2_pvalues(proc, belief, S1, candidates, seed)
    return candidates[int(np.argmin(pvals))], pvals
