"""Rejection ABC and noisy ABC.

Stream layout for one inference call: the first ``dim + 1`` draws (six for the
quartile summary) build the noisy-ABC ball perturbation, ``dim`` normal scores
then one radius uniform, and are reserved even for plain ABC; then each
proposal takes one uniform for theta (prior quantile) followed by whatever the
model consumes for its dataset. The
compiled g-and-k kernel and the generic loop follow the same layout, so they
accept the same proposals (barring floating-point ties between order
statistics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from calib_lab._accel import USE_NUMBA, njit
from calib_lab.core import special
from calib_lab.core.distributions import Normal
from calib_lab.core.rng import RngStream, StreamBatch, fill_uniforms, uniform_block
from calib_lab.core.types import AbcExhausted, Empirical, EmpiricalBatch, as_dataset
from calib_lab.procedures.gk import GKModel, gk_quantile, gk_transform, quartile_summary

SUMMARY_DIM = 5
NOISE_DRAWS = SUMMARY_DIM + 1


@dataclass(frozen=True)
class AbcConfig:
    tolerance: float
    ensemble_size: int = 100
    max_proposals: int = 10_000_000
    noisy: bool = False

    def __post_init__(self):
        if not self.tolerance >= 0:
            raise ValueError("ABC tolerance must be non-negative")
        if self.ensemble_size < 1:
            raise ValueError("ensemble size must be at least 1")
        if self.max_proposals < self.ensemble_size:
            raise ValueError("max_proposals must be at least the ensemble size")


def ball_offsets(u: np.ndarray, dim: int = SUMMARY_DIM) -> np.ndarray:
    """Map rows of ``dim + 1`` uniforms to points uniform on the unit ball in R^dim.

    Direction from normalised normal scores, radius ``U^(1/dim)``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    z = special.ndtri_array(u[:, :dim])
    r = u[:, dim] ** (1.0 / dim)
    return z * (r / np.linalg.norm(z, axis=1))[:, None]


def _accepts(d2, eps: float):
    if math.isinf(eps):
        return np.ones(np.shape(d2), dtype=bool)
    if eps == 0:
        return np.asarray(d2) == 0.0
    return np.asarray(d2) < eps * eps


def abc_infer(prior, model, summary: Callable, cfg: AbcConfig, y_obs, rng: RngStream) -> Empirical:
    """Rejection sampler; raises ``AbcExhausted`` if ``max_proposals`` run out."""
    s_obs = np.atleast_1d(np.asarray(summary(as_dataset(y_obs)), dtype=float))
    u = rng.uniform(s_obs.size + 1)
    target = s_obs
    if cfg.noisy and math.isfinite(cfg.tolerance):
        target = s_obs + cfg.tolerance * ball_offsets(u, s_obs.size)[0]
    accepted = []
    for _ in range(cfg.max_proposals):
        theta = float(np.atleast_1d(prior.sample(rng))[0])
        s = np.atleast_1d(np.asarray(summary(np.asarray(model.simulate(np.array([theta]), rng))), dtype=float))
        d = s - target
        if _accepts(float(d @ d), cfg.tolerance):
            accepted.append(theta)
            if len(accepted) == cfg.ensemble_size:
                return Empirical(np.array(accepted)[:, None])
    raise AbcExhausted(f"ABC accepted {len(accepted)} of {cfg.ensemble_size} after {cfg.max_proposals} proposals",
                       len(accepted) / cfg.max_proposals)


# compiled path: Normal prior, g-and-k model, quartile summary ---------------

def sorting_network(n: int) -> np.ndarray:
    """Comparator pairs of Batcher's odd-even merge sort for ``n`` inputs."""
    p = 1
    while p < n:
        p *= 2
    pairs = []
    size = 1
    while size < p:
        k = size
        while k >= 1:
            for j in range(k % size, p - k, 2 * k):
                for i in range(min(k, p - j - k)):
                    a, b = i + j, i + j + k
                    # comparators touching padding (implicitly +inf) never swap
                    if a // (2 * size) == b // (2 * size) and b < n:
                        pairs.append((a, b))
            k //= 2
        size *= 2
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


@njit
def _net_sort(x, pairs):
    for c in range(pairs.shape[0]):
        i = pairs[c, 0]
        j = pairs[c, 1]
        a = x[i]
        b = x[j]
        lt = a < b
        x[i] = a if lt else b
        x[j] = b if lt else a


@njit
def _component(uu, j, theta, b, g, k):
    # the interpolation of sorted_quartiles, evaluated only at the order statistics it needs
    n = uu.size
    h = (n - 1) * 0.25 * j
    lo = min(int(math.floor(h)), n - 1)
    hi = min(lo + 1, n - 1)
    xlo = gk_transform(special.ndtri(uu[lo]), theta, b, g, k)
    xhi = xlo if hi == lo else gk_transform(special.ndtri(uu[hi]), theta, b, g, k)
    return xlo + (h - lo) * (xhi - xlo)


@njit
def _rules_out(partial, mode, bail):
    return (mode == 1 and partial > 0.0) or (mode == 0 and partial >= bail)


BRACKET_BITS = 15
_BRACKET_SLACK = 1e-9


@lru_cache(maxsize=8)
def bracket_tables(params, bits: int = BRACKET_BITS):
    """Normal scores and g-and-k values at the grid ``j / 2^bits``, with infinite ends.

    Both maps are increasing, so a uniform in ``[j, j + 1) / 2^bits`` maps
    between entries ``j`` and ``j + 1``.
    """
    K = 1 << bits
    z = np.empty(K + 1)
    z[0], z[K] = -math.inf, math.inf
    z[1:K] = special.ndtri_array(np.arange(1, K) / K)
    f = np.empty(K + 1)
    f[0], f[K] = -math.inf, math.inf
    f[1:K] = gk_quantile(z[1:K], 0.0, params)
    return z, f


@njit
def _gap(lo, hi, target):
    # distance from target to [lo, hi], widened by a relative slack for rounding
    lo -= _BRACKET_SLACK * (1.0 + abs(lo))
    hi += _BRACKET_SLACK * (1.0 + abs(hi))
    if target < lo:
        return lo - target
    if target > hi:
        return target - hi
    return 0.0


@njit
def _abc_gk_nb(seed, streams, sub, m0, s0, b, g, k, n_obs, targets, eps2, mode, M, max_prop, pairs,
               ztab, ftab):
    """mode 0: accept d2 < eps2; 1: accept d2 == 0; 2: accept everything.

    The g-and-k transform and the normal quantile are increasing, so the
    order statistics of the data are the transformed order statistics of the
    uniforms. The max and min need only a scan and are checked first; the
    rest of the summary is computed only for proposals they do not rule out.
    Before any exact evaluation, table brackets give a lower bound on the
    max/min distance; a proposal is dropped early only when that bound
    already rules it out, so the accepted set is unchanged.
    """
    K = ztab.size - 1
    width = n_obs + 1
    n = streams.size
    out = np.full((n, M), np.nan)
    proposals = np.zeros(n, dtype=np.int64)
    buf = np.empty(n_obs + 1)
    uu = np.empty(n_obs)
    s = np.empty(5)
    bail = eps2 * (1.0 + 1e-12)
    for i in range(n):
        pos = NOISE_DRAWS
        got = 0
        used = 0
        while got < M and used < max_prop:
            used += 1
            if mode == 2:
                fill_uniforms(seed, streams[i], sub, pos, buf[:1])
                pos += width
                out[i, got] = m0 + s0 * special.ndtri(buf[0])
                got += 1
                continue
            fill_uniforms(seed, streams[i], sub, pos, buf)
            pos += width
            umin = buf[1]
            umax = buf[1]
            for j in range(2, width):
                v = buf[j]
                umin = v if v < umin else umin
                umax = v if v > umax else umax
            jt = int(buf[0] * K)
            tlo = m0 + s0 * ztab[jt]
            thi = m0 + s0 * ztab[jt + 1]
            jx = int(umax * K)
            gx = _gap(tlo + ftab[jx], thi + ftab[jx + 1], targets[i, 4])
            jn = int(umin * K)
            gn = _gap(tlo + ftab[jn], thi + ftab[jn + 1], targets[i, 0])
            if _rules_out(gx * gx + gn * gn, mode, bail):
                continue
            theta = m0 + s0 * special.ndtri(buf[0])
            s[4] = gk_transform(special.ndtri(umax), theta, b, g, k)
            t = s[4] - targets[i, 4]
            partial = t * t
            if _rules_out(partial, mode, bail):
                continue
            s[0] = gk_transform(special.ndtri(umin), theta, b, g, k)
            t = s[0] - targets[i, 0]
            partial += t * t
            if _rules_out(partial, mode, bail):
                continue
            uu[:] = buf[1:]
            _net_sort(uu, pairs)
            rejected = False
            for j in (2, 1, 3):
                s[j] = _component(uu, j, theta, b, g, k)
                t = s[j] - targets[i, j]
                partial += t * t
                if _rules_out(partial, mode, bail):
                    rejected = True
                    break
            if rejected:
                continue
            d2 = 0.0
            for j in range(5):
                t = s[j] - targets[i, j]
                d2 += t * t
            if (mode == 1 and d2 == 0.0) or (mode == 0 and d2 < eps2):
                out[i, got] = theta
                got += 1
        proposals[i] = used
    return out, proposals


def _abc_gk_np(seed, streams, sub, m0, s0, params, n_obs, targets, eps, M, max_prop, block=64):
    n = streams.size
    width = n_obs + 1
    out = np.full((n, M), np.nan)
    got = np.zeros(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    done = 0  # proposals consumed by every still-active replicate
    while active.size and done < max_prop:
        P = int(min(block, max_prop - done))
        u = uniform_block(seed, streams[active], sub, NOISE_DRAWS + done * width, P * width)
        u = u.reshape(active.size, P, width)
        theta = m0 + s0 * special.ndtri_array(u[:, :, 0])
        y = gk_quantile(special.ndtri_array(u[:, :, 1:]), 0.0, params) + theta[:, :, None]
        d = quartile_summary(y) - targets[active][:, None, :]
        ok = _accepts(np.einsum("ijk,ijk->ij", d, d), eps)
        for r, i in enumerate(active):
            hits = np.flatnonzero(ok[r])[: M - got[i]]
            out[i, got[i]:got[i] + hits.size] = theta[r, hits]
            got[i] += hits.size
            used[i] = done + (int(hits[-1]) + 1 if got[i] == M else P)
        done += P
        active = active[got[active] < M]
    return out, used


@dataclass(frozen=True)
class AbcProcedure:
    """Rejection ABC (or noisy ABC) as a learning procedure."""

    model: object
    config: AbcConfig
    summary: Callable = quartile_summary

    def infer(self, belief, y, rng: RngStream) -> Empirical:
        return abc_infer(belief, self.model, self.summary, self.config, y, rng)

    def _targets(self, ys, streams: StreamBatch) -> np.ndarray:
        s_obs = quartile_summary(np.asarray(ys, dtype=float))
        u = StreamBatch(streams.master_seed, streams.stream_ids, streams.substream).uniform(NOISE_DRAWS)
        if self.config.noisy and math.isfinite(self.config.tolerance):
            return s_obs + self.config.tolerance * ball_offsets(u)
        return s_obs

    def infer_batch(self, belief, ys, streams: StreamBatch) -> EmpiricalBatch:
        fast = (isinstance(belief, Normal) and isinstance(self.model, GKModel)
                and self.summary is quartile_summary)
        if not fast:
            return self._generic_batch(belief, ys, streams)
        if streams.position != 0:
            raise ValueError("ABC batches must start at the beginning of their substream")
        cfg = self.config
        targets = np.ascontiguousarray(self._targets(ys, streams))
        p = self.model.params
        seed = np.uint64(streams.master_seed)
        ids = np.ascontiguousarray(streams.stream_ids)
        if USE_NUMBA:
            eps = cfg.tolerance
            mode = 2 if math.isinf(eps) else (1 if eps == 0 else 0)
            eps2 = 0.0 if math.isinf(eps) else eps * eps
            out, used = _abc_gk_nb(seed, ids, int(streams.substream), belief.mean, belief.sd,
                                   p.b, p.g, p.k, self.model.n_obs, targets, eps2, mode,
                                   cfg.ensemble_size, cfg.max_proposals,
                                   sorting_network(self.model.n_obs), *bracket_tables(p))
        else:
            out, used = _abc_gk_np(seed, ids, int(streams.substream), belief.mean, belief.sd, p,
                                   self.model.n_obs, targets, cfg.tolerance, cfg.ensemble_size, cfg.max_proposals)
        failed = np.isnan(out).any(axis=1)
        return EmpiricalBatch(out[:, :, None], failed, used)

    def _generic_batch(self, belief, ys, streams: StreamBatch) -> EmpiricalBatch:
        M = self.config.ensemble_size
        out = np.full((len(streams), M, 1), np.nan)
        for i in range(len(streams)):
            try:
                out[i] = self.infer(belief, ys[i], streams.stream(i)).samples
            except AbcExhausted:
                pass
        return EmpiricalBatch(out, np.isnan(out).any(axis=(1, 2)))


def acceptance_rate(batch: EmpiricalBatch) -> float:
    """Accepted over proposed across a batch; nan when proposal counts were not tracked."""
    if batch.proposals is None:
        return float("nan")
    acc = np.count_nonzero(~np.isnan(batch.samples[:, :, 0]))
    return acc / max(int(batch.proposals.sum()), 1)
