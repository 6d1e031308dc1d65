"""Minwise signature, log-log baseline, and cross-sketch helper tests."""

import math

import numpy as np
import pytest
from scipy import stats

from setsketch.baselines import (
    GeneralizedHyperLogLog,
    JointCounts,
    MinHash,
    compare_registers,
    deserialize_sketch,
    ghll_joint_applicable,
    setsketch_to_minhash_values,
)
from setsketch.estimation import estimate_cardinality_minwise
from setsketch.randomness import RandomStream, split_seed
from setsketch.sketches import SetSketch, SketchConfig, SketchFormatError


def random_keys(seed: int, n: int) -> np.ndarray:
    return RandomStream(split_seed(seed, 0)).next_u64_block(n)


# ---------------------------------------------------------------- minwise


def test_minhash_fresh_and_validation():
    s = MinHash(8)
    assert s.components.tolist() == [1.0] * 8
    assert s.points_generated == 0
    with pytest.raises(ValueError):
        MinHash(0)


def test_minhash_batch_equals_scalar():
    keys = random_keys(2, 5000)
    batch = MinHash(64)
    batch.insert_all(keys)
    seq = MinHash(64)
    for e in keys.tolist():
        seq.insert(e)
    assert batch == seq
    assert batch.points_generated == seq.points_generated == 64 * 5000


def test_minhash_idempotent_and_order_free():
    keys = random_keys(3, 1000)
    once = MinHash(32)
    once.insert_all(keys)
    messy = MinHash(32)
    messy.insert_all(keys[::-1])
    messy.insert_all(keys[:100])
    assert messy == once


def test_minhash_component_collision_probability():
    # P(component_A == component_B) equals the Jaccard index exactly
    m = 4096
    shared = random_keys(4, 300)
    only_a = random_keys(5, 450)
    only_b = random_keys(6, 750)
    # J = 300 / 1500 = 0.2
    a = MinHash(m)
    a.insert_all(np.concatenate([shared, only_a]))
    b = MinHash(m)
    b.insert_all(np.concatenate([shared, only_b]))
    rate = float(np.mean(a.components == b.components))
    assert abs(rate - 0.2) < 4 * math.sqrt(0.2 * 0.8 / m)
    # degenerate cases
    same = compare_registers(a, a)
    assert same == JointCounts(0, 0, m)
    disjoint_a = MinHash(64)
    disjoint_a.insert_all(only_a)
    disjoint_b = MinHash(64)
    disjoint_b.insert_all(only_b)
    assert float(np.mean(disjoint_a.components == disjoint_b.components)) < 0.1


def test_minwise_cardinality_estimator():
    # all components at 1 - 1/e make the estimate exactly 1
    s = MinHash(16)
    s._components = np.full(16, -math.expm1(-1.0))
    assert estimate_cardinality_minwise(s.components) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        estimate_cardinality_minwise(MinHash(4).components)  # untouched component

    # relative error sized like 1/sqrt(m)
    m, trials, n = 64, 300, 2000
    errs = np.empty(trials)
    for t in range(trials):
        sk = MinHash(m)
        sk.insert_all(RandomStream(split_seed(600, t)).next_u64_block(n))
        errs[t] = estimate_cardinality_minwise(sk.components) / n - 1.0
    rmse = float(np.sqrt(np.mean(errs**2)))
    assert 0.85 / math.sqrt(m) < rmse < 1.15 / math.sqrt(m)


def test_minhash_merge_and_roundtrip():
    keys = random_keys(7, 2000)
    a = MinHash(128)
    a.insert_all(keys[:1500])
    b = MinHash(128)
    b.insert_all(keys[800:])
    direct = MinHash(128)
    direct.insert_all(keys)
    assert a.merge(b) == direct
    with pytest.raises(ValueError):
        a.merge(MinHash(64))
    blob = direct.serialize()
    back = MinHash.deserialize(blob)
    assert back == direct
    assert isinstance(deserialize_sketch(blob), MinHash)
    with pytest.raises(SketchFormatError):
        MinHash.deserialize(blob[:-3])


# ---------------------------------------------------------------- log-log


def test_ghll_batch_equals_scalar():
    keys = random_keys(11, 20_000)
    for tracking in (True, False):
        batch = GeneralizedHyperLogLog(256, 2.0, 62, track_lower_bound=tracking)
        batch.insert_all(keys)
        seq = GeneralizedHyperLogLog(256, 2.0, 62, track_lower_bound=tracking)
        for e in keys.tolist():
            seq.insert(e)
        assert batch == seq


def test_ghll_tracking_does_not_change_registers():
    for idx, n in enumerate((5, 300, 50_000)):
        keys = random_keys(100 + idx, n)
        tracked = GeneralizedHyperLogLog(64, 2.0, 62, track_lower_bound=True)
        tracked.insert_all(keys)
        plain = GeneralizedHyperLogLog(64, 2.0, 62, track_lower_bound=False)
        plain.insert_all(keys)
        assert tracked == plain
        assert tracked.update_attempts <= plain.update_attempts == n


def test_ghll_scalar_attempts_counter():
    keys = random_keys(15, 30_000).tolist()
    tracked = GeneralizedHyperLogLog(16, 2.0, 62, track_lower_bound=True)
    plain = GeneralizedHyperLogLog(16, 2.0, 62, track_lower_bound=False)
    for e in keys:
        tracked.insert(e)
        plain.insert(e)
    assert plain.update_attempts == len(keys)
    # once every register is warm, most candidates lose to the lower bound
    assert tracked.update_attempts < plain.update_attempts / 2
    assert tracked == plain


def test_ghll_idempotent_merge_histogram():
    keys = random_keys(17, 4000)
    once = GeneralizedHyperLogLog(64, 2.0, 62)
    once.insert_all(keys)
    twice = GeneralizedHyperLogLog(64, 2.0, 62)
    twice.insert_all(np.concatenate([keys, keys]))
    assert once == twice

    a = GeneralizedHyperLogLog(64, 2.0, 62)
    a.insert_all(keys[:3000])
    b = GeneralizedHyperLogLog(64, 2.0, 62)
    b.insert_all(keys[1000:])
    direct = GeneralizedHyperLogLog(64, 2.0, 62)
    direct.insert_all(keys)
    assert a.merge(b) == direct
    with pytest.raises(ValueError):
        a.merge(GeneralizedHyperLogLog(32, 2.0, 62))
    hist = direct.histogram()
    assert hist.sum() == 64
    assert hist.shape == (64,) or hist.shape == (62 + 2,)


def test_ghll_marginal_distribution():
    # P(register <= k) = (1 - b^-k / m)^n from single-slot updates
    m, n, b, q, trials = 16, 100, 2.0, 62, 8000
    first = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        s = GeneralizedHyperLogLog(m, b, q)
        s.insert_all(RandomStream(split_seed(700, t)).next_u64_block(n))
        first[t] = s._registers[0]
    ks = np.arange(q + 2)
    theory = (1.0 - np.float_power(b, -ks) / m) ** n
    theory[-1] = 1.0
    empirical = np.searchsorted(np.sort(first), ks, side="right") / trials
    assert np.abs(empirical - theory).max() < 0.025


def test_ghll_corrected_estimate_tracks_truth():
    n = 50_000
    s = GeneralizedHyperLogLog(256, 2.0, 62)
    s.insert_all(random_keys(19, n))
    est = s.cardinality("corrected")
    rsd = 1.0389617614136892 / 16  # base-2 register dispersion at m=256
    assert abs(est / n - 1.0) < 4 * rsd
    with pytest.raises(ValueError):
        s.cardinality("nonsense")


def test_ghll_roundtrip():
    s = GeneralizedHyperLogLog(32, 1.5, 100)
    s.insert_all(random_keys(23, 500))
    blob = s.serialize()
    back = GeneralizedHyperLogLog.deserialize(blob)
    assert back == s
    assert back.lower_bound == int(s.registers.min())
    assert isinstance(deserialize_sketch(blob), GeneralizedHyperLogLog)
    bad = bytearray(blob)
    bad[30:34] = (102).to_bytes(4, "little")  # register above q+1
    with pytest.raises(SketchFormatError):
        GeneralizedHyperLogLog.deserialize(bytes(bad))


# ---------------------------------------------------------------- comparisons


def test_compare_registers_hand_cases():
    a = GeneralizedHyperLogLog(4, 2.0, 10)
    b = GeneralizedHyperLogLog(4, 2.0, 10)
    a._registers = np.array([5, 3, 2, 0], dtype=np.uint32)
    b._registers = np.array([4, 3, 7, 0], dtype=np.uint32)
    counts = compare_registers(a, b)
    assert counts == JointCounts(d_plus=1, d_minus=1, d_zero=2)
    assert counts.m == 4
    flipped = compare_registers(b, a)
    assert (flipped.d_plus, flipped.d_minus) == (counts.d_minus, counts.d_plus)
    with pytest.raises(ValueError):
        compare_registers(a, GeneralizedHyperLogLog(4, 2.0, 11))
    with pytest.raises(ValueError):
        compare_registers(a, MinHash(4))
    with pytest.raises(ValueError):
        compare_registers(a, b, ordering="sideways")


def test_compare_registers_minwise_ordering():
    a = MinHash(3)
    b = MinHash(3)
    a._components = np.array([0.1, 0.5, 0.9])
    b._components = np.array([0.3, 0.5, 0.2])
    counts = compare_registers(a, b)
    # smaller minimum means a private element on that side
    assert counts == JointCounts(d_plus=1, d_minus=1, d_zero=1)


def test_compare_registers_setsketch_variant_guard():
    cfg = SketchConfig(8, 2.0, 20.0, 30)
    s1 = SetSketch(cfg, 1)
    s2 = SetSketch(cfg, 2)
    with pytest.raises(ValueError):
        compare_registers(s1, s2)


def test_ghll_joint_applicability():
    a = GeneralizedHyperLogLog(16, 2.0, 30)
    b = GeneralizedHyperLogLog(16, 2.0, 30)
    assert not ghll_joint_applicable(a, b)  # all slots still zero on both sides
    # enough elements that every slot is hit on both sides
    a.insert_all(random_keys(41, 5000))
    b.insert_all(random_keys(42, 5000))
    assert ghll_joint_applicable(a, b)
    a._registers[3] = 31
    b._registers[3] = 31  # saturated on both sides
    assert not ghll_joint_applicable(a, b)
    with pytest.raises(ValueError):
        ghll_joint_applicable(a, GeneralizedHyperLogLog(16, 2.0, 31))


def test_register_to_minwise_value_continuum():
    # for b near 1 the mapped register values of a variant-1 sketch follow
    # the minwise component law P(V > t) = (1-t)^n
    m, n, trials = 4, 50, 1500
    cfg = SketchConfig(m, 1.0001, 20.0, 250_000)
    mapped = np.empty(trials)
    minwise = np.empty(trials)
    for t in range(trials):
        keys = RandomStream(split_seed(900, t)).next_u64_block(n)
        s = SetSketch(cfg)
        s.insert_all(keys)
        mapped[t] = setsketch_to_minhash_values(s)[0]
        mh = MinHash(m)
        mh.insert_all(RandomStream(split_seed(901, t)).next_u64_block(n))
        minwise[t] = mh.components[0]
    d = stats.ks_2samp(mapped, minwise).statistic
    assert d < 1.95 * math.sqrt(2.0 / trials) * 1.2
