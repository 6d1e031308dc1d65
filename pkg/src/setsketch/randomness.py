"""Deterministic pseudorandom primitives underlying every sketch.

All randomness in this package derives from one pinned generator, the
splitmix64 sequence: output t of the stream seeded with s is
``mix64(s + t * GOLDEN_GAMMA)``.  Sketch states are reproducible only for a
fixed generator, so this choice is part of the package contract.  The counter
form has a second benefit: any stream position can be evaluated directly,
which lets batched code compute whole blocks of draws with vectorized
integer arithmetic and still agree bit for bit with sequential draws.

Streams regenerate a full 64-bit word per draw; no bit pooling is attempted.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1

# 2^64 divided by the golden ratio; the standard splitmix64 increment.
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_MULT_1 = 0xBF58476D1CE4E5B9
_MULT_2 = 0x94D049BB133111EB

_NP_GOLDEN = np.uint64(GOLDEN_GAMMA)
_NP_MULT_1 = np.uint64(_MULT_1)
_NP_MULT_2 = np.uint64(_MULT_2)
_NP_S30 = np.uint64(30)
_NP_S27 = np.uint64(27)
_NP_S31 = np.uint64(31)
_NP_S11 = np.uint64(11)

#: Scale turning the top 53 bits of a word into a double in [0, 1).
UNIFORM_SCALE = 2.0 ** -53


def mix64(z: int) -> int:
    """splitmix64 finalizer: an avalanching bijection on 64-bit words."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MULT_1) & MASK64
    z = ((z ^ (z >> 27)) * _MULT_2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> _NP_S30)) * _NP_MULT_1
    z = (z ^ (z >> _NP_S27)) * _NP_MULT_2
    return z ^ (z >> _NP_S31)


def split_seed(seed: int, index: int) -> int:
    """Derive the seed of an independent substream, e.g. for trial number
    ``index`` of an experiment.  Pure function of (seed, index)."""
    return mix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)


def stream_from_seed(seed: int) -> "RandomStream":
    return RandomStream(seed)


class RandomStream:
    """Sequential splitmix64 stream; outputs are a pure function of the seed.

    ``draws`` counts consumed 64-bit words.  The stream is a single-owner
    mutable object; create independent streams from distinct seeds instead of
    sharing one across concurrent users.
    """

    __slots__ = ("_state", "draws")

    def __init__(self, seed: int):
        self._state = seed & MASK64
        self.draws = 0

    def next_u64(self) -> int:
        s = (self._state + GOLDEN_GAMMA) & MASK64
        self._state = s
        self.draws += 1
        return mix64(s)

    def next_u64_block(self, count: int) -> np.ndarray:
        """The next ``count`` words as a uint64 array, bit-identical to
        ``count`` calls of :meth:`next_u64`."""
        base = self._state
        offsets = np.arange(1, count + 1, dtype=np.uint64) * _NP_GOLDEN
        self._state = (base + count * GOLDEN_GAMMA) & MASK64
        self.draws += count
        return mix64_array(np.uint64(base) + offsets)

    def next_uniform(self) -> float:
        """Uniform double in [0, 1), 53 random bits."""
        return (self.next_u64() >> 11) * UNIFORM_SCALE

    def next_uniform_block(self, count: int) -> np.ndarray:
        return (self.next_u64_block(count) >> _NP_S11).astype(np.float64) * UNIFORM_SCALE

    def next_exponential(self, rate: float) -> float:
        """Draw from Exponential(rate) by inverse CDF.

        Support is [0, inf); a zero draw occurs exactly when the underlying
        uniform is 0.
        """
        if not rate > 0.0:
            raise ValueError(f"rate must be positive, got {rate}")
        return -math.log1p(-self.next_uniform()) / rate

    def next_truncated_exponential(self, rate: float, lo: float, hi: float) -> float:
        """Draw from Exponential(rate) conditioned on [lo, hi).

        Exact inverse-CDF transform of a single uniform; no rejection loop.
        ``hi`` may be infinite, in which case this reduces (bit for bit) to
        ``lo + next_exponential(rate)``.
        """
        if not rate > 0.0:
            raise ValueError(f"rate must be positive, got {rate}")
        if not (0.0 <= lo < hi):
            raise ValueError(f"invalid interval [{lo}, {hi})")
        # P(X <= x) on the interval is (1 - e^{-rate (x-lo)}) / w.
        w = -math.expm1(-rate * (hi - lo))
        return lo - math.log1p(-self.next_uniform() * w) / rate

    def next_index(self, n: int) -> int:
        """Integer in [0, n) from one word.

        Uses the remainder map, whose bias (at most n / 2^64) is far below
        anything the statistical contracts here can resolve.
        """
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        return self.next_u64() % n


class PermutationSampler:
    """Incremental Fisher-Yates sampling without replacement over {0..m-1}.

    Draw j swaps slot j with a uniform slot in [j, m); only displaced entries
    are stored, so a prefix of k draws costs O(k) time and memory no matter
    how large m is.  After m draws the emitted indices are exactly a uniform
    random permutation.
    """

    __slots__ = ("m", "_displaced", "_drawn")

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"m must be at least 1, got {m}")
        self.m = m
        self._displaced = {}
        self._drawn = 0

    @property
    def drawn(self) -> int:
        return self._drawn

    def reset(self) -> None:
        self._displaced.clear()
        self._drawn = 0

    def next_index(self, stream: RandomStream) -> int:
        """Emit one not-yet-emitted index, uniformly among the remaining."""
        j = self._drawn
        m = self.m
        if j >= m:
            raise RuntimeError(f"all {m} indices already drawn")
        r = j + stream.next_index(m - j)
        d = self._displaced
        value = d.get(r, r)
        if r != j:
            # Swap slots j and r; slot j is never read again, so only the
            # value moved into slot r needs storing.
            d[r] = d.get(j, j)
        self._drawn = j + 1
        return value
