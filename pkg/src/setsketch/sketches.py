"""Mergeable register sketches over a tunable geometric level scale.

A sketch holds m registers, each recording (clamped to {0, .., q+1}) the
largest level ``floor(1 - log_b x)`` among the points x that landed on it.
The base b sets the trade-off: large b gives coarse, cheap registers in the
spirit of a log-log counter, while b close to 1 approaches the behaviour of
a bottom-k / minwise signature.  Registers depend only on the inserted set,
never on insertion order or duplication, so sketches of set unions are exact
element-wise maxima of the operands' registers.

Two point-generation variants are provided.  Variant 1 draws an increasing
sequence of exponentially spaced points per element, each paired with a
fresh register index sampled without replacement.  Variant 2 instead draws
one point per slice of a fixed partition of the axis into m equal-mass
intervals, which makes the m register values negatively correlated and
noticeably tightens small-set estimates; both share the same stopping rules
and produce identically distributed register marginals.
"""

import math
import struct
from bisect import bisect_left
from typing import NamedTuple

import numpy as np

from .randomness import (
    GOLDEN_GAMMA,
    MASK64,
    UNIFORM_SCALE,
    mix64_array,
)

MAGIC = b"SSKB"
FORMAT_VERSION = 1

VARIANT_SETSKETCH_1 = 1
VARIANT_SETSKETCH_2 = 2
VARIANT_MINHASH = 3
VARIANT_GHLL = 4

# Relative slack applied to the vectorized prefilter threshold.  The filter
# may only ever pass extra elements through to the exact scalar loop, never
# drop one that the scalar loop would have kept, so a one-sided guard at a
# few ulps is enough to absorb library differences in log1p rounding.
_FILTER_GUARD = 1.0 + 1e-12

_ENVELOPE = struct.Struct("<4sBBIIdd")

_NP_S11 = np.uint64(11)
_NP_GOLDEN = np.uint64(GOLDEN_GAMMA)


class SketchFormatError(ValueError):
    """Raised when serialized bytes do not describe a valid sketch."""


class ConfigReport(NamedTuple):
    a_min: float
    q_min: int
    ok: bool


class SketchConfig:
    """Shared parameters (m, b, a, q) plus precomputed level tables.

    The table of powers b^-k for k in 0..q+1 is built once, in double
    precision, and shared by every sketch using this config; all level
    lookups are resolved by binary search against it, so threshold behaviour
    at level boundaries is decided by plain float comparisons rather than by
    the rounding of a log evaluation.
    """

    __slots__ = (
        "m",
        "b",
        "a",
        "q",
        "_powers",
        "_powers_list",
        "_asc_levels",
        "_asc_levels_list",
    )

    def __init__(self, m: int, b: float, a: float, q: int):
        if not (isinstance(m, (int, np.integer)) and m >= 1):
            raise ValueError(f"m must be a positive integer, got {m!r}")
        b = float(b)
        a = float(a)
        if not b > 1.0:
            raise ValueError(f"b must exceed 1, got {b}")
        if not a > 0.0:
            raise ValueError(f"a must be positive, got {a}")
        if not (isinstance(q, (int, np.integer)) and q >= 0):
            raise ValueError(f"q must be a non-negative integer, got {q!r}")
        self.m = int(m)
        self.b = b
        self.a = a
        self.q = int(q)
        powers = b ** -np.arange(self.q + 2, dtype=np.float64)
        powers.setflags(write=False)
        self._powers = powers
        self._powers_list = powers.tolist()
        # Ascending levels q..0, i.e. the thresholds separating update
        # values 0..q+1; the count of entries >= x is the update value.
        asc = powers[self.q::-1].copy()
        asc.setflags(write=False)
        self._asc_levels = asc
        self._asc_levels_list = asc.tolist()

    @property
    def powers(self) -> np.ndarray:
        """Read-only array of b^-k for k = 0..q+1 (descending)."""
        return self._powers

    def memory_bits(self) -> int:
        """Nominal register storage: m values from an alphabet of q+2."""
        return self.m * math.ceil(math.log2(self.q + 2))

    def update_value(self, x: float) -> int:
        """Level of a point: floor(1 - log_b x) clamped to {0, .., q+1}.

        Evaluated as a count of table thresholds b^-j (j = 0..q) lying at or
        above x, which pins the boundary convention: x equal to a stored
        power b^-k maps to k+1.
        """
        if not x > 0.0:
            raise ValueError(f"point must be positive, got {x}")
        return self._update_value_raw(x)

    def _update_value_raw(self, x: float) -> int:
        return self.q + 1 - bisect_left(self._asc_levels_list, x)

    def update_values(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`update_value`; same comparisons, same results."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size and not (xs > 0.0).all():
            raise ValueError("points must be positive")
        return self.q + 1 - np.searchsorted(self._asc_levels, xs, side="left")

    def _key(self):
        return (self.m, self.b, self.a, self.q)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SketchConfig):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"SketchConfig(m={self.m}, b={self.b}, a={self.a}, q={self.q})"


def validate_config(
    config: SketchConfig, epsilon: float, n_max: float
) -> ConfigReport:
    """Check that clamping is negligible for cardinalities up to n_max.

    Returns the smallest a keeping the chance of any register wanting a
    negative value (at n = 1) below epsilon, the smallest q keeping the
    chance of any register wanting a value above q+1 (at n = n_max) below
    epsilon, and whether the given config meets both.
    """
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not n_max >= 1.0:
        raise ValueError(f"n_max must be at least 1, got {n_max}")
    m, b, a, q = config.m, config.b, config.a, config.q
    a_min = math.log(m / epsilon) / b
    q_min = math.floor(math.log(m * n_max * a / epsilon) / math.log(b))
    return ConfigReport(a_min=a_min, q_min=q_min, ok=(a >= a_min and q >= q_min))


class SetSketch:
    """One sketch instance: m registers plus lower-bound bookkeeping.

    ``lower_bound`` tracks a value B <= min(registers); once warm it lets
    insertion discard most elements after generating a single point.  It is
    bookkeeping only: registers never depend on it, and it is recomputed
    (not stored) across serialization.
    """

    __slots__ = (
        "config",
        "variant",
        "_registers",
        "_lower_bound",
        "_mod_count",
        "_points_generated",
        "_gammas",
    )

    def __init__(self, config: SketchConfig, variant: int = VARIANT_SETSKETCH_1):
        if variant not in (VARIANT_SETSKETCH_1, VARIANT_SETSKETCH_2):
            raise ValueError(f"unknown variant {variant!r}")
        self.config = config
        self.variant = variant
        m = config.m
        self._registers = [0] * m
        self._lower_bound = 0
        self._mod_count = 0
        self._points_generated = 0
        if variant == VARIANT_SETSKETCH_2:
            a = config.a
            # Interval boundaries g_0..g_{m-1}; slice j covers [g_j, g_{j+1})
            # and carries probability exactly 1/m under Exponential(a).
            self._gammas = [math.log1p(j / (m - j)) / a for j in range(m)]
        else:
            self._gammas = None

    @property
    def registers(self) -> np.ndarray:
        return np.array(self._registers, dtype=np.uint32)

    @property
    def lower_bound(self) -> int:
        return self._lower_bound

    @property
    def modifications_since_refresh(self) -> int:
        return self._mod_count

    @property
    def points_generated(self) -> int:
        """Total inner-loop iterations spent by insertions so far."""
        return self._points_generated

    def __eq__(self, other) -> bool:
        if not isinstance(other, SetSketch):
            return NotImplemented
        return (
            self.config == other.config
            and self.variant == other.variant
            and self._registers == other._registers
        )

    def __repr__(self) -> str:
        return (
            f"SetSketch(variant={self.variant}, {self.config!r}, "
            f"lower_bound={self._lower_bound})"
        )

    def insert(self, element: int) -> None:
        """Insert one element (a 64-bit integer key).

        Idempotent, and insertion order never affects the registers.
        """
        self._consume(int(element) & MASK64)

    def _consume(self, element: int) -> None:
        """Exact register update loop for one element.

        Draw t of the element is mix64(element + t * GOLDEN_GAMMA), inlined
        here so the loop costs nothing beyond what it consumes: odd
        positions feed points, even positions feed register indices, and a
        break simply leaves the remaining positions unevaluated.  Both
        stopping rules are pure optimizations: a point beyond the
        lower-bound threshold can only produce levels <= B <= min(registers),
        so skipping the rest of the sequence never changes the registers.
        """
        cfg = self.config
        m = cfg.m
        q = cfg.q
        a = cfg.a
        asc = cfg._asc_levels_list
        powers = cfg._powers_list
        regs = self._registers
        lower = self._lower_bound
        mods = self._mod_count
        threshold = powers[lower]
        hi = q - lower if lower < q else 0
        q1 = q + 1
        gammas = self._gammas
        log1p = math.log1p
        gold = GOLDEN_GAMMA
        mask = MASK64
        mult1 = 0xBF58476D1CE4E5B9
        mult2 = 0x94D049BB133111EB
        scale = UNIFORM_SCALE
        displaced = {}
        points = 0
        x = 0.0
        state = element
        for j0 in range(m):
            state = (state + gold) & mask
            z = ((state ^ (state >> 30)) * mult1) & mask
            z = ((z ^ (z >> 27)) * mult2) & mask
            u = ((z ^ (z >> 31)) >> 11) * scale
            if gammas is None:
                x += (-log1p(-u) / a) / (m - j0)
            else:
                x = gammas[j0] - log1p(-u * (1.0 / (m - j0))) / a
            points += 1
            if x > threshold:
                break
            k = q1 - bisect_left(asc, x, 0, hi)
            if k <= lower:
                break
            state = (state + gold) & mask
            z = ((state ^ (state >> 30)) * mult1) & mask
            z = ((z ^ (z >> 27)) * mult2) & mask
            r = j0 + (z ^ (z >> 31)) % (m - j0)
            i = displaced.get(r, r)
            if r != j0:
                displaced[r] = displaced.get(j0, j0)
            if k > regs[i]:
                regs[i] = k
                mods += 1
                if mods >= m:
                    lower = min(regs)
                    mods = 0
                    threshold = powers[lower]
                    hi = q - lower if lower < q else 0
        self._lower_bound = lower
        self._mod_count = mods
        self._points_generated += points

    def insert_all(self, elements) -> None:
        """Insert a batch of elements.

        The final state is bit-identical to inserting them one at a time:
        a vectorized first-point filter merely routes elements that cannot
        touch any register (the vast majority once the sketch is warm) away
        from the exact per-element loop.  Filtered elements still count one
        generated point each, matching the sequential loop's work.
        """
        elems = np.ascontiguousarray(elements, dtype=np.uint64)
        if elems.ndim != 1:
            elems = elems.reshape(-1)
        cfg = self.config
        m = cfg.m
        a = cfg.a
        variant2 = self.variant == VARIANT_SETSKETCH_2
        consume = self._consume
        pos = 0
        total = elems.size
        while pos < total:
            threshold = cfg._powers_list[self._lower_bound]
            # Expected survivor fraction of the first-point filter governs
            # how many elements are worth filtering at once.
            if variant2:
                p_pass = min(1.0, m * -math.expm1(-a * threshold))
            else:
                p_pass = -math.expm1(-a * m * threshold)
            chunk = int(min(65536, max(1024, 2048.0 / max(p_pass, 1e-12))))
            block = elems[pos : pos + chunk]
            pos += block.size
            u1 = ((mix64_array(block + _NP_GOLDEN) >> _NP_S11).astype(np.float64)
                  * UNIFORM_SCALE)
            if variant2:
                x1 = 0.0 - np.log1p(-(u1 * (1.0 / m))) / a
            else:
                x1 = (-np.log1p(-u1) / a) / m
            keep = x1 <= threshold * _FILTER_GUARD
            survivors = block[keep]
            self._points_generated += block.size - survivors.size
            for element in survivors.tolist():
                consume(element)

    def merge(self, other: "SetSketch") -> "SetSketch":
        """Union sketch: element-wise register maximum.

        Equals the sketch of the union built directly, bit for bit.
        """
        if not isinstance(other, SetSketch):
            raise ValueError(f"cannot merge SetSketch with {type(other).__name__}")
        if self.config != other.config or self.variant != other.variant:
            raise ValueError("merge requires identical config and variant")
        merged = SetSketch(self.config, self.variant)
        merged._registers = [
            x if x >= y else y for x, y in zip(self._registers, other._registers)
        ]
        merged._lower_bound = min(merged._registers)
        merged._mod_count = 0
        return merged

    def histogram(self) -> np.ndarray:
        """Register value counts C_0..C_{q+1}; sums to m."""
        return np.bincount(
            np.asarray(self._registers, dtype=np.int64), minlength=self.config.q + 2
        )

    def cardinality(self, method: str = "raw") -> float:
        """Convenience dispatcher into :mod:`setsketch.estimation`."""
        from . import estimation

        if method == "raw":
            return estimation.estimate_cardinality_raw(self._registers, self.config)
        if method == "corrected":
            return estimation.estimate_cardinality_corrected(
                self.histogram(), self.config
            )
        if method == "ml":
            return estimation.estimate_cardinality_ml(self._registers, self.config)
        raise ValueError(f"unknown estimator {method!r}")

    def serialize(self) -> bytes:
        header = _pack_envelope(self.variant, self.config.m, self.config.q,
                                self.config.b, self.config.a)
        body = np.array(self._registers, dtype="<u4").tobytes()
        return header + body

    @classmethod
    def deserialize(cls, data: bytes) -> "SetSketch":
        variant, m, q, b, a, body = _unpack_envelope(data)
        if variant not in (VARIANT_SETSKETCH_1, VARIANT_SETSKETCH_2):
            raise SketchFormatError(f"not a point-sequence sketch: variant {variant}")
        expected = 4 * m
        if len(body) != expected:
            raise SketchFormatError(
                f"register payload is {len(body)} bytes, expected {expected}"
            )
        registers = np.frombuffer(body, dtype="<u4")
        if registers.size and int(registers.max()) > q + 1:
            raise SketchFormatError("register value exceeds q+1")
        sketch = cls(SketchConfig(m, b, a, q), variant)
        sketch._registers = [int(v) for v in registers]
        sketch._lower_bound = min(sketch._registers)
        sketch._mod_count = 0
        return sketch


def new_sketch(config: SketchConfig, variant: int = VARIANT_SETSKETCH_1) -> SetSketch:
    return SetSketch(config, variant)


def _pack_envelope(variant: int, m: int, q: int, b: float, a: float) -> bytes:
    return _ENVELOPE.pack(MAGIC, FORMAT_VERSION, variant, m, q, b, a)


def _unpack_envelope(data: bytes):
    if len(data) < _ENVELOPE.size:
        raise SketchFormatError(f"truncated header: {len(data)} bytes")
    magic, version, variant, m, q, b, a = _ENVELOPE.unpack_from(data, 0)
    if magic != MAGIC:
        raise SketchFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SketchFormatError(f"unsupported format version {version}")
    return variant, m, q, b, a, data[_ENVELOPE.size :]


def peek_variant(data: bytes) -> int:
    """Variant code of serialized bytes, without deserializing."""
    return _unpack_envelope(data)[0]
