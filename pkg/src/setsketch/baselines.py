"""Reference sketches sitting at the two ends of the base-b continuum,
plus the register-comparison ops shared by all joint estimators.

MinHash keeps m per-component minima of uniform draws (the b -> 1 limit of
the register construction, stored as raw doubles).  The generalized log-log
counter routes each element to one register by stochastic averaging and is
the b >= 2 end of the scale; with base 2 and small q it is the classic
HyperLogLog register array.
"""

from typing import NamedTuple, Union

import numpy as np

from .randomness import (
    GOLDEN_GAMMA,
    MASK64,
    UNIFORM_SCALE,
    RandomStream,
    mix64_array,
)
from .sketches import (
    SetSketch,
    SketchConfig,
    SketchFormatError,
    VARIANT_GHLL,
    VARIANT_MINHASH,
    _pack_envelope,
    _unpack_envelope,
)

_NP_S11 = np.uint64(11)
_NP_GOLDEN = np.uint64(GOLDEN_GAMMA)
_NP_GOLDEN2 = np.uint64((2 * GOLDEN_GAMMA) & MASK64)


class JointCounts(NamedTuple):
    """Register comparison tallies between two sketches of equal shape."""

    d_plus: int
    d_minus: int
    d_zero: int

    @property
    def m(self) -> int:
        return self.d_plus + self.d_minus + self.d_zero


class MinHash:
    """Classic m-component minwise signature over uniform doubles.

    Component i of an element is draw i of the element's stream, so a
    MinHash and any other sketch built from the same keys consume identical
    randomness.  Components start at 1, the identity of min; a sketch that
    has absorbed at least one element has every component strictly below 1.
    """

    __slots__ = ("m", "_components", "_points_generated")

    def __init__(self, m: int):
        if m < 1:
            raise ValueError(f"m must be at least 1, got {m}")
        self.m = m
        self._components = np.ones(m, dtype=np.float64)
        self._points_generated = 0

    @property
    def components(self) -> np.ndarray:
        return self._components.copy()

    @property
    def points_generated(self) -> int:
        """Inner work counter; by construction exactly m per element."""
        return self._points_generated

    def __eq__(self, other) -> bool:
        if not isinstance(other, MinHash):
            return NotImplemented
        return self.m == other.m and np.array_equal(
            self._components, other._components
        )

    def _element_uniforms(self, elements: np.ndarray) -> np.ndarray:
        offsets = np.arange(1, self.m + 1, dtype=np.uint64) * _NP_GOLDEN
        block = mix64_array(elements[:, None] + offsets[None, :])
        return (block >> _NP_S11).astype(np.float64) * UNIFORM_SCALE

    def insert(self, element: int) -> None:
        arr = np.array([int(element) & MASK64], dtype=np.uint64)
        us = self._element_uniforms(arr)
        np.minimum(self._components, us[0], out=self._components)
        self._points_generated += self.m

    def insert_all(self, elements) -> None:
        """Batch insert; min is associative, so any grouping is exact."""
        elems = np.ascontiguousarray(elements, dtype=np.uint64).reshape(-1)
        chunk = max(1, (1 << 21) // self.m)
        for start in range(0, elems.size, chunk):
            us = self._element_uniforms(elems[start : start + chunk])
            np.minimum(self._components, us.min(axis=0), out=self._components)
        self._points_generated += self.m * elems.size

    def merge(self, other: "MinHash") -> "MinHash":
        if not isinstance(other, MinHash):
            raise ValueError(f"cannot merge MinHash with {type(other).__name__}")
        if self.m != other.m:
            raise ValueError("merge requires equal m")
        merged = MinHash(self.m)
        merged._components = np.minimum(self._components, other._components)
        return merged

    def serialize(self) -> bytes:
        header = _pack_envelope(VARIANT_MINHASH, self.m, 0, 0.0, 0.0)
        return header + self._components.astype("<f8").tobytes()

    @classmethod
    def deserialize(cls, data: bytes) -> "MinHash":
        variant, m, _q, _b, _a, body = _unpack_envelope(data)
        if variant != VARIANT_MINHASH:
            raise SketchFormatError(f"not a minwise signature: variant {variant}")
        if len(body) != 8 * m:
            raise SketchFormatError(
                f"component payload is {len(body)} bytes, expected {8 * m}"
            )
        sketch = cls(m)
        sketch._components = np.frombuffer(body, dtype="<f8").astype(np.float64)
        return sketch


class GeneralizedHyperLogLog:
    """Stochastic-averaging register sketch on the same level scale.

    Each element updates a single register, chosen uniformly from the
    element's first draw; the candidate value is the level of a uniform
    point from the second draw.  Estimation treats the registers as a rate
    1/m point process, so the matching config carries a = 1/m.
    """

    __slots__ = (
        "config",
        "track_lower_bound",
        "_registers",
        "_lower_bound",
        "_mod_count",
        "_update_attempts",
    )

    def __init__(self, m: int, b: float, q: int, track_lower_bound: bool = True):
        self.config = SketchConfig(m, b, 1.0 / m, q)
        self.track_lower_bound = track_lower_bound
        self._registers = np.zeros(m, dtype=np.uint32)
        self._lower_bound = 0
        self._mod_count = 0
        self._update_attempts = 0

    @property
    def registers(self) -> np.ndarray:
        return self._registers.copy()

    @property
    def lower_bound(self) -> int:
        return self._lower_bound

    @property
    def update_attempts(self) -> int:
        """Register writes attempted; lower-bound tracking skips attempts
        whose candidate level cannot win.  Exact for scalar inserts, an
        upper bound for batch inserts (the batch filter uses the bound
        frozen at chunk start)."""
        return self._update_attempts

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneralizedHyperLogLog):
            return NotImplemented
        return self.config == other.config and np.array_equal(
            self._registers, other._registers
        )

    def insert(self, element: int) -> None:
        stream = RandomStream(int(element) & MASK64)
        idx = stream.next_index(self.config.m)
        u = stream.next_uniform()
        k = self.config._update_value_raw(u)
        if self.track_lower_bound and k <= self._lower_bound:
            return
        self._update_attempts += 1
        if k > self._registers[idx]:
            self._registers[idx] = k
            self._mod_count += 1
            if self._mod_count >= self.config.m:
                self._refresh_lower_bound()

    def insert_all(self, elements) -> None:
        """Batch insert; register maxima are order-free, so this is exact."""
        elems = np.ascontiguousarray(elements, dtype=np.uint64).reshape(-1)
        if elems.size == 0:
            return
        m = self.config.m
        for start in range(0, elems.size, 1 << 18):
            block = elems[start : start + (1 << 18)]
            idx = mix64_array(block + _NP_GOLDEN) % np.uint64(m)
            u = ((mix64_array(block + _NP_GOLDEN2) >> _NP_S11).astype(np.float64)
                 * UNIFORM_SCALE)
            ks = self.config.q + 1 - np.searchsorted(
                self.config._asc_levels, u, side="left"
            )
            if self.track_lower_bound:
                live = ks > self._lower_bound
                self._update_attempts += int(np.count_nonzero(live))
                if not live.any():
                    continue
                idx = idx[live]
                ks = ks[live]
            else:
                self._update_attempts += block.size
            np.maximum.at(self._registers, idx, ks.astype(np.uint32))
            if self.track_lower_bound:
                self._refresh_lower_bound()

    def _refresh_lower_bound(self) -> None:
        self._lower_bound = int(self._registers.min())
        self._mod_count = 0

    def merge(self, other: "GeneralizedHyperLogLog") -> "GeneralizedHyperLogLog":
        if not isinstance(other, GeneralizedHyperLogLog):
            raise ValueError(
                f"cannot merge GeneralizedHyperLogLog with {type(other).__name__}"
            )
        if self.config != other.config:
            raise ValueError("merge requires identical config")
        merged = GeneralizedHyperLogLog(
            self.config.m, self.config.b, self.config.q, self.track_lower_bound
        )
        merged._registers = np.maximum(self._registers, other._registers)
        merged._refresh_lower_bound()
        merged._mod_count = 0
        return merged

    def histogram(self) -> np.ndarray:
        return np.bincount(
            self._registers.astype(np.int64), minlength=self.config.q + 2
        )

    def cardinality(self, method: str = "corrected") -> float:
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
        header = _pack_envelope(
            VARIANT_GHLL, self.config.m, self.config.q, self.config.b, self.config.a
        )
        return header + self._registers.astype("<u4").tobytes()

    @classmethod
    def deserialize(cls, data: bytes) -> "GeneralizedHyperLogLog":
        variant, m, q, b, _a, body = _unpack_envelope(data)
        if variant != VARIANT_GHLL:
            raise SketchFormatError(f"not a log-log sketch: variant {variant}")
        if len(body) != 4 * m:
            raise SketchFormatError(
                f"register payload is {len(body)} bytes, expected {4 * m}"
            )
        registers = np.frombuffer(body, dtype="<u4")
        if registers.size and int(registers.max()) > q + 1:
            raise SketchFormatError("register value exceeds q+1")
        sketch = cls(m, b, q)
        sketch._registers = registers.astype(np.uint32)
        sketch._refresh_lower_bound()
        sketch._mod_count = 0
        return sketch


RegisterSketch = Union[SetSketch, GeneralizedHyperLogLog]


def compare_registers(sketch_a, sketch_b, ordering: str = None) -> JointCounts:
    """Per-slot comparison tallies (d_plus, d_minus, d_zero).

    For register sketches (max aggregation) d_plus counts slots where A's
    value exceeds B's; for minwise signatures (min aggregation) the roles
    flip, so d_plus counts components where A's minimum is smaller.  Either
    way d_plus counts slots pointing at elements private to A.
    """
    if ordering is None:
        ordering = "min_based" if isinstance(sketch_a, MinHash) else "max_based"
    if ordering not in ("max_based", "min_based"):
        raise ValueError(f"unknown ordering {ordering!r}")
    if isinstance(sketch_a, MinHash) != isinstance(sketch_b, MinHash):
        raise ValueError("cannot compare sketches of different kinds")
    if isinstance(sketch_a, MinHash):
        if sketch_a.m != sketch_b.m:
            raise ValueError("comparison requires equal m")
        va = sketch_a._components
        vb = sketch_b._components
    else:
        if type(sketch_a) is not type(sketch_b):
            raise ValueError("cannot compare sketches of different kinds")
        if sketch_a.config != sketch_b.config:
            raise ValueError("comparison requires identical config")
        if isinstance(sketch_a, SetSketch) and sketch_a.variant != sketch_b.variant:
            raise ValueError("comparison requires identical variant")
        va = np.asarray(sketch_a.registers, dtype=np.int64)
        vb = np.asarray(sketch_b.registers, dtype=np.int64)
    if ordering == "max_based":
        d_plus = int(np.count_nonzero(va > vb))
        d_minus = int(np.count_nonzero(vb > va))
    else:
        d_plus = int(np.count_nonzero(va < vb))
        d_minus = int(np.count_nonzero(vb < va))
    d_zero = va.size - d_plus - d_minus
    return JointCounts(d_plus=d_plus, d_minus=d_minus, d_zero=d_zero)


def ghll_joint_applicable(
    sketch_a: GeneralizedHyperLogLog, sketch_b: GeneralizedHyperLogLog
) -> bool:
    """Whether stochastic-averaging sketches support joint estimation.

    Single-register updates break the independent-registers model whenever
    a slot is still untouched in both sketches (small sets: not every slot
    has been hit) or clamped high in both (overflow).  Callers should fall
    back to inclusion-exclusion when this returns False.
    """
    if sketch_a.config != sketch_b.config:
        raise ValueError("comparison requires identical config")
    ra = sketch_a._registers
    rb = sketch_b._registers
    top = sketch_a.config.q + 1
    both_zero = np.count_nonzero((ra == 0) & (rb == 0))
    both_top = np.count_nonzero((ra == top) & (rb == top))
    return both_zero == 0 and both_top == 0


def setsketch_to_minhash_values(sketch: SetSketch) -> np.ndarray:
    """Map registers to (0, 1] minwise-style values: 1 - e^(-a b^-K).

    As b -> 1 (with q scaled accordingly) the mapped values of a variant-1
    sketch converge in distribution to MinHash components over the same set,
    which is the sense in which the two families form one continuum.
    """
    cfg = sketch.config
    return -np.expm1(-cfg.a * cfg.powers[np.asarray(sketch.registers, dtype=np.int64)])


def deserialize_sketch(data: bytes):
    """Reconstruct any serialized sketch, dispatching on the variant code."""
    variant = _unpack_envelope(data)[0]
    if variant in (1, 2):
        return SetSketch.deserialize(data)
    if variant == VARIANT_MINHASH:
        return MinHash.deserialize(data)
    if variant == VARIANT_GHLL:
        return GeneralizedHyperLogLog.deserialize(data)
    raise SketchFormatError(f"unknown sketch variant {variant}")
