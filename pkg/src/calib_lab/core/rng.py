"""Counter-based random streams (Philox4x32-10).

A stream is addressed by ``(master_seed, stream_id, substream)``; draw ``k``
of a stream is a pure function of those three numbers and ``k``. The 64-bit
master seed is the Philox key, and the 128-bit counter is laid out as

    word 0   block index (two doubles per block)
    word 1   substream tag
    word 2,3 stream id (low, high)

so jumping to any stream or any position is O(1), and replicate ``i`` of an
experiment draws the same numbers no matter how the replicates are chunked or
which thread runs them.
"""

from __future__ import annotations

import numpy as np

from calib_lab._accel import USE_NUMBA, njit
from calib_lab.core.special import ndtri_array

_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = 0xFFFFFFFF
_TWO_M53 = 1.0 / 9007199254740992.0
_U64 = (1 << 64) - 1


@njit
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on one 128-bit counter; all arguments are uint64 holding 32 bits."""
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    w0 = np.uint64(_W0)
    w1 = np.uint64(_W1)
    mask = np.uint64(_MASK)
    s32 = np.uint64(32)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        hi0 = p0 >> s32
        lo0 = p0 & mask
        hi1 = p1 >> s32
        lo1 = p1 & mask
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & mask, lo1, (hi0 ^ c3 ^ k1) & mask, lo0
        k0 = (k0 + w0) & mask
        k1 = (k1 + w1) & mask
    return c0, c1, c2, c3


@njit
def _draw(seed, stream, sub, k):
    mask = np.uint64(_MASK)
    s32 = np.uint64(32)
    block = np.uint64(k >> 1)
    r0, r1, r2, r3 = philox4x32(block & mask, np.uint64(sub) & mask, stream & mask,
                                stream >> s32, seed & mask, seed >> s32)
    if k & 1:
        bits = (r3 << s32) | r2
    else:
        bits = (r1 << s32) | r0
    return (np.int64(bits >> np.uint64(11)) + 0.5) * _TWO_M53


@njit
def fill_uniforms(seed, stream, sub, offset, out):
    """Write draws ``offset, offset+1, ...`` of one stream into ``out``; usable from other kernels."""
    mask = np.uint64(_MASK)
    s32 = np.uint64(32)
    s11 = np.uint64(11)
    k0 = seed & mask
    k1 = seed >> s32
    c1 = np.uint64(sub) & mask
    c2 = stream & mask
    c3 = stream >> s32
    n = out.size
    i = 0
    k = offset
    while i < n:
        block = np.uint64(k >> 1)
        r0, r1, r2, r3 = philox4x32(block & mask, c1, c2, c3, k0, k1)
        if (k & 1) == 0:
            out[i] = (np.int64(((r1 << s32) | r0) >> s11) + 0.5) * _TWO_M53
            i += 1
            k += 1
            if i >= n:
                break
        out[i] = (np.int64(((r3 << s32) | r2) >> s11) + 0.5) * _TWO_M53
        i += 1
        k += 1


@njit
def _uniform_block_nb(seed, streams, sub, offset, k):
    out = np.empty((streams.size, k))
    for i in range(streams.size):
        fill_uniforms(seed, streams[i], sub, offset, out[i])
    return out


def _philox_np(c0, c1, c2, c3, k0, k1):
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    mask = np.uint64(_MASK)
    s32 = np.uint64(32)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = ((p1 >> s32) ^ c1 ^ k0) & mask, p1 & mask, ((p0 >> s32) ^ c3 ^ k1) & mask, p0 & mask
        k0 = (k0 + np.uint64(_W0)) & mask
        k1 = (k1 + np.uint64(_W1)) & mask
    return c0, c1, c2, c3


def _uniform_block_np(seed, streams, sub, offset, k):
    mask = np.uint64(_MASK)
    s32 = np.uint64(32)
    n = streams.size
    first = offset >> 1
    last = (offset + k - 1) >> 1
    blocks = np.arange(first, last + 1, dtype=np.uint64)
    c0 = np.broadcast_to(blocks & mask, (n, blocks.size))
    c1 = np.full((n, blocks.size), np.uint64(sub) & mask)
    c2 = np.broadcast_to((streams & mask)[:, None], (n, blocks.size))
    c3 = np.broadcast_to((streams >> s32)[:, None], (n, blocks.size))
    r0, r1, r2, r3 = _philox_np(c0, c1, c2, c3, np.uint64(seed) & mask, np.uint64(seed) >> s32)
    bits = np.empty((n, 2 * blocks.size), dtype=np.uint64)
    bits[:, 0::2] = (r1 << s32) | r0
    bits[:, 1::2] = (r3 << s32) | r2
    start = offset - 2 * first
    bits = bits[:, start:start + k]
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def uniform_block(seed: int, streams, sub: int, offset: int, k: int) -> np.ndarray:
    """Draws ``offset .. offset+k-1`` of each stream in ``streams``, shape ``(len(streams), k)``."""
    streams = np.ascontiguousarray(streams, dtype=np.uint64).ravel()
    seed = np.uint64(int(seed) & _U64)
    if k <= 0 or streams.size == 0:
        return np.empty((streams.size, max(k, 0)))
    if USE_NUMBA:
        return _uniform_block_nb(seed, streams, int(sub), int(offset), int(k))
    return _uniform_block_np(seed, streams, int(sub), int(offset), int(k))


class RngStream:
    """One substream of draws, consumed sequentially.

    Owned by a single worker at a time; ``spawn`` gives an independent sibling.
    """

    __slots__ = ("master_seed", "stream_id", "substream", "position")

    def __init__(self, master_seed: int, stream_id: int = 0, substream: int = 0, position: int = 0):
        self.master_seed = int(master_seed) & _U64
        self.stream_id = int(stream_id) & _U64
        self.substream = int(substream) & _MASK
        self.position = int(position)

    def __repr__(self):
        return (f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id}, "
                f"substream={self.substream}, position={self.position})")

    def spawn(self, substream: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, substream)

    def uniform(self, size=None):
        k = 1 if size is None else int(np.prod(size))
        out = uniform_block(self.master_seed, [self.stream_id], self.substream, self.position, k)[0]
        self.position += k
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def normal(self, size=None):
        u = self.uniform(size)
        if size is None:
            return float(ndtri_array(u))
        return ndtri_array(u)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by ``n - 1`` draws."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for j, i in enumerate(range(n - 1, 0, -1)):
            r = min(int(u[j] * (i + 1)), i)
            perm[i], perm[r] = perm[r], perm[i]
        return perm


class StreamBatch:
    """The same substream across many replicates; row ``i`` belongs to ``stream_ids[i]``.

    ``batch.uniform(k)[i]`` equals ``RngStream(seed, stream_ids[i], sub).uniform(k)``
    when both start at the same position.
    """

    def __init__(self, master_seed: int, stream_ids, substream: int = 0, position: int = 0):
        self.master_seed = int(master_seed) & _U64
        self.stream_ids = np.asarray(stream_ids, dtype=np.uint64).ravel()
        self.substream = int(substream)
        self.position = int(position)

    def __len__(self):
        return self.stream_ids.size

    def uniform(self, k: int = 1) -> np.ndarray:
        out = uniform_block(self.master_seed, self.stream_ids, self.substream, self.position, k)
        self.position += k
        return out

    def normal(self, k: int = 1) -> np.ndarray:
        return ndtri_array(self.uniform(k))

    def stream(self, i: int) -> RngStream:
        return RngStream(self.master_seed, int(self.stream_ids[i]), self.substream, self.position)

    def spawn(self, substream: int) -> "StreamBatch":
        return StreamBatch(self.master_seed, self.stream_ids, substream)

    def subset(self, idx) -> "StreamBatch":
        return StreamBatch(self.master_seed, self.stream_ids[idx], self.substream, self.position)


def derive_seed(master_seed: int, *tags: int) -> int:
    """A 64-bit seed derived from ``master_seed`` and integer tags, for nested experiments."""
    seed = int(master_seed) & _U64
    for tag in tags:
        u = uniform_block(seed, [int(tag) & _U64], 0xFFFFFFFF, 0, 2)[0]
        hi = int(u[0] * 2.0**53) & 0xFFFFFFFF
        lo = int(u[1] * 2.0**53) & 0xFFFFFFFF
        seed = (hi << 32) | lo
    return seed
