"""Register sketch tests: level mapping, exactness, merge, serialization."""

import math

import numpy as np
import pytest

from setsketch.randomness import (
    MASK64,
    PermutationSampler,
    RandomStream,
    split_seed,
)
from setsketch.sketches import (
    FORMAT_VERSION,
    MAGIC,
    SetSketch,
    SketchConfig,
    SketchFormatError,
    VARIANT_SETSKETCH_1,
    VARIANT_SETSKETCH_2,
    new_sketch,
    peek_variant,
    validate_config,
)

CFG = SketchConfig(m=256, b=2.0, a=20.0, q=38)


def random_keys(seed: int, n: int) -> np.ndarray:
    return RandomStream(split_seed(seed, 0)).next_u64_block(n)


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        SketchConfig(0, 2.0, 20.0, 10)
    with pytest.raises(ValueError):
        SketchConfig(4, 1.0, 20.0, 10)
    with pytest.raises(ValueError):
        SketchConfig(4, 2.0, 0.0, 10)
    with pytest.raises(ValueError):
        SketchConfig(4, 2.0, 20.0, -1)
    with pytest.raises(ValueError):
        SketchConfig(4.5, 2.0, 20.0, 10)


def test_config_equality_and_hash():
    a = SketchConfig(16, 2.0, 20.0, 10)
    b = SketchConfig(16, 2.0, 20.0, 10)
    c = SketchConfig(16, 2.0, 20.0, 11)
    assert a == b and hash(a) == hash(b)
    assert a != c
    assert a != "not a config"


def test_power_table():
    cfg = SketchConfig(4, 2.0, 1.0, 6)
    assert cfg.powers.shape == (8,)
    assert cfg.powers[0] == 1.0
    assert cfg.powers[3] == 0.125
    with pytest.raises(ValueError):
        cfg.powers[0] = 2.0  # read-only
    assert cfg.memory_bits() == 4 * 3  # alphabet size 8 needs 3 bits


def test_update_value_boundaries():
    cfg = SketchConfig(4, 2.0, 1.0, 10)
    # a point exactly on a stored power b^-k belongs to level k+1
    for k in range(cfg.q + 1):
        x = cfg.powers[k]
        assert cfg.update_value(float(x)) == k + 1
        assert cfg.update_value(float(x) * 1.0000001) == k
    assert cfg.update_value(100.0) == 0  # beyond b^0: clamp low
    assert cfg.update_value(2.0**-40) == cfg.q + 1  # below b^-q: clamp high
    with pytest.raises(ValueError):
        cfg.update_value(0.0)
    with pytest.raises(ValueError):
        cfg.update_value(-1.0)


def test_update_value_matches_log_formula():
    cfg = SketchConfig(4, 1.7, 1.0, 30)
    stream = RandomStream(5)
    log_b = math.log(1.7)
    for _ in range(2000):
        # log-uniform x over the full level range, nudged off boundaries
        t = stream.next_uniform() * 34.0 - 2.0
        if abs(t - round(t)) < 1e-6:
            continue
        x = 1.7**-t
        want = min(cfg.q + 1, max(0, math.floor(1.0 - math.log(x) / log_b)))
        assert cfg.update_value(x) == want


def test_update_values_vectorized_matches_scalar():
    cfg = SketchConfig(4, 2.0, 1.0, 12)
    xs = RandomStream(9).next_uniform_block(500) * 4.0 + 1e-6
    vec = cfg.update_values(xs)
    assert vec.tolist() == [cfg.update_value(float(x)) for x in xs]
    with pytest.raises(ValueError):
        cfg.update_values(np.array([0.5, -1.0]))


def test_validate_config_worked_example():
    cfg = SketchConfig(4096, 1.001, 20.0, 65534)
    report = validate_config(cfg, epsilon=1e-5, n_max=1e18)
    assert abs(report.a_min - 19.810880750938637) < 1e-9
    assert report.q_min == 64305
    assert report.ok
    # chance any register wants to go below 0 at n=1, union bound
    tail_low = 4096 * math.exp(-20.0 * 1.001)
    assert 8.25e-6 <= tail_low <= 8.31e-6
    # chance any register wants to go above q+1 at n=n_max, union bound
    tail_high = 4096 * 1e18 * 20.0 * 1.001 ** -(65534 + 1)
    assert 2.9e-6 <= tail_high <= 2.96e-6
    # loosening either knob flips the verdict
    assert not validate_config(SketchConfig(4096, 1.001, 19.0, 65534), 1e-5, 1e18).ok
    assert not validate_config(SketchConfig(4096, 1.001, 20.0, 60000), 1e-5, 1e18).ok
    with pytest.raises(ValueError):
        validate_config(cfg, 0.0, 1e18)
    with pytest.raises(ValueError):
        validate_config(cfg, 1e-5, 0.5)


def test_validate_config_default_experiment_shape():
    report = validate_config(CFG, epsilon=0.01, n_max=1e6)
    assert report.q_min == 38
    assert report.ok


def test_a_min_tail_probability_monte_carlo():
    # a_min = ln(m/eps)/b keeps the chance that any of m Exp(a) register
    # points exceeds b (and so would map below level 0) at about eps.
    m, b, eps = 16, 2.0, 0.01
    a_min = validate_config(SketchConfig(m, b, 1.0, 1), eps, 1.0).a_min
    p_exact = 1.0 - (1.0 - math.exp(-a_min * b)) ** m
    assert p_exact <= eps
    rng = np.random.default_rng(1234)
    hits = (rng.exponential(1.0 / a_min, size=(300_000, m)).max(axis=1) > b).mean()
    sd = math.sqrt(p_exact * (1 - p_exact) / 300_000)
    assert abs(hits - p_exact) < 5 * sd
    # just below a_min the model rate crosses eps
    worse = 1.0 - (1.0 - math.exp(-0.9 * a_min * b)) ** m
    assert worse > eps


# ---------------------------------------------------------------- sketch core


def test_fresh_sketch_state():
    s = new_sketch(CFG)
    assert s.registers.tolist() == [0] * 256
    assert s.lower_bound == 0
    assert s.points_generated == 0
    assert s.variant == VARIANT_SETSKETCH_1
    with pytest.raises(ValueError):
        SetSketch(CFG, variant=7)


def test_variant2_interval_masses_are_equal():
    # interval j of the variant-2 partition carries Exp(a)-mass exactly 1/m
    s = SetSketch(SketchConfig(64, 2.0, 3.5, 20), VARIANT_SETSKETCH_2)
    gammas = s._gammas
    assert gammas[0] == 0.0
    for j, g in enumerate(gammas):
        assert abs(math.exp(-3.5 * g) - (1.0 - j / 64)) < 1e-12


def _reference_registers(cfg, variant, elements):
    """No-shortcut reimplementation: every point, every index, no filters."""
    regs = [0] * cfg.m
    if variant == VARIANT_SETSKETCH_2:
        gammas = [math.log1p(j / (cfg.m - j)) / cfg.a for j in range(cfg.m)]
    for e in elements:
        stream = RandomStream(int(e) & MASK64)
        sampler = PermutationSampler(cfg.m)
        x = 0.0
        for j in range(cfg.m):
            u = stream.next_uniform()
            if variant == VARIANT_SETSKETCH_1:
                x += (-math.log1p(-u) / cfg.a) / (cfg.m - j)
            else:
                x = gammas[j] - math.log1p(-u * (1.0 / (cfg.m - j))) / cfg.a
            i = sampler.next_index(stream)
            k = cfg.update_value(x)
            if k > regs[i]:
                regs[i] = k
    return regs


@pytest.mark.parametrize("variant", [VARIANT_SETSKETCH_1, VARIANT_SETSKETCH_2])
def test_early_exits_never_change_registers(variant):
    # the sketch's threshold filter and loop breaks must be invisible
    cases = [
        (4, 1),
        (4, 100),
        (4, 2000),
        (16, 3),
        (16, 500),
        (64, 1),
        (64, 250),
    ]
    for idx, (m, n) in enumerate(cases):
        cfg = SketchConfig(m, 2.0, 20.0, 50)
        keys = RandomStream(split_seed(1000 + idx, variant)).next_u64_block(n)
        s = SetSketch(cfg, variant)
        s.insert_all(keys)
        assert s._registers == _reference_registers(cfg, variant, keys.tolist())


@pytest.mark.parametrize("variant", [VARIANT_SETSKETCH_1, VARIANT_SETSKETCH_2])
def test_batch_equals_sequential_bit_for_bit(variant):
    keys = random_keys(variant, 20_000)
    batch = SetSketch(CFG, variant)
    batch.insert_all(keys)
    seq = SetSketch(CFG, variant)
    for e in keys.tolist():
        seq.insert(e)
    assert batch._registers == seq._registers
    assert batch.points_generated == seq.points_generated
    assert batch.lower_bound == seq.lower_bound


def test_chunking_and_order_do_not_matter():
    keys = random_keys(77, 30_000)
    whole = SetSketch(CFG)
    whole.insert_all(keys)
    ragged = SetSketch(CFG)
    for lo, hi in ((0, 1), (1, 999), (999, 17_000), (17_000, 30_000)):
        ragged.insert_all(keys[lo:hi])
    assert ragged == whole
    shuffled = SetSketch(CFG)
    shuffled.insert_all(keys[::-1])
    assert shuffled == whole


def test_idempotent_and_duplicate_insensitive():
    keys = random_keys(5, 3000)
    once = SetSketch(CFG)
    once.insert_all(keys)
    thrice = SetSketch(CFG)
    thrice.insert_all(np.concatenate([keys, keys, keys]))
    assert thrice == once
    regs_before = once.registers
    once.insert(int(keys[0]))
    assert once.registers.tolist() == regs_before.tolist()


def test_registers_monotone_and_bounded_by_lower_bound():
    s = SetSketch(CFG)
    prev = np.zeros(256, dtype=np.uint32)
    keys = random_keys(13, 50_000)
    done = 0
    for stop in (10, 100, 1000, 10_000, 50_000):
        s.insert_all(keys[done:stop])
        done = stop
        regs = s.registers
        assert np.all(regs >= prev)
        assert np.all(regs <= CFG.q + 1)
        assert s.lower_bound <= int(regs.min())
        prev = regs


def test_marginal_register_distribution_variant1():
    _check_marginal_cdf(VARIANT_SETSKETCH_1, m=4, trials=8000, seed=21)


def test_marginal_register_distribution_variant2():
    _check_marginal_cdf(VARIANT_SETSKETCH_2, m=16, trials=8000, seed=22)


def _check_marginal_cdf(variant, m, trials, seed):
    # P(register <= k) = exp(-n a b^-k) for both variants at every n
    n, a, b, q = 100, 20.0, 2.0, 38
    cfg = SketchConfig(m, b, a, q)
    first = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        keys = RandomStream(split_seed(seed, t)).next_u64_block(n)
        s = SetSketch(cfg, variant)
        s.insert_all(keys)
        first[t] = s._registers[0]
    ks = np.arange(q + 2)
    theory = np.exp(-n * a * np.float_power(b, -ks))
    theory[-1] = 1.0
    empirical = np.searchsorted(np.sort(first), ks, side="right") / trials
    assert np.abs(empirical - theory).max() < 0.025


# ---------------------------------------------------------------- merge


def test_merge_equals_direct_union():
    keys = random_keys(31, 9000)
    a = SetSketch(CFG)
    a.insert_all(keys[:6000])
    b = SetSketch(CFG)
    b.insert_all(keys[3000:])  # overlapping ranges
    direct = SetSketch(CFG)
    direct.insert_all(keys)
    merged = a.merge(b)
    assert merged == direct
    assert merged._registers == direct._registers
    assert b.merge(a) == direct
    assert merged.lower_bound == min(merged._registers)


def test_merge_identity_and_idempotence():
    keys = random_keys(33, 2000)
    s = SetSketch(CFG)
    s.insert_all(keys)
    empty = SetSketch(CFG)
    assert s.merge(empty) == s
    assert empty.merge(s) == s
    assert s.merge(s) == s


def test_merge_rejects_mismatched_shapes():
    s = SetSketch(CFG)
    other_cfg = SetSketch(SketchConfig(256, 2.0, 20.0, 39))
    with pytest.raises(ValueError):
        s.merge(other_cfg)
    other_variant = SetSketch(CFG, VARIANT_SETSKETCH_2)
    with pytest.raises(ValueError):
        s.merge(other_variant)
    with pytest.raises(ValueError):
        s.merge("nonsense")


def test_histogram():
    s = SetSketch(CFG)
    s.insert_all(random_keys(3, 500))
    hist = s.histogram()
    assert hist.shape == (CFG.q + 2,)
    assert hist.sum() == CFG.m
    regs = s.registers
    for k in (0, 10, CFG.q + 1):
        assert hist[k] == int((regs == k).sum())


# ---------------------------------------------------------------- wire format


def test_serialize_roundtrip():
    for variant in (VARIANT_SETSKETCH_1, VARIANT_SETSKETCH_2):
        s = SetSketch(CFG, variant)
        s.insert_all(random_keys(variant + 50, 4000))
        blob = s.serialize()
        assert blob[:4] == MAGIC
        assert len(blob) == 30 + 4 * CFG.m
        assert peek_variant(blob) == variant
        back = SetSketch.deserialize(blob)
        assert back == s
        assert back.lower_bound == min(s._registers)
        assert back.serialize() == blob


def test_deserialize_rejects_garbage():
    s = SetSketch(CFG)
    s.insert_all(random_keys(8, 100))
    blob = bytearray(s.serialize())

    with pytest.raises(SketchFormatError):
        SetSketch.deserialize(b"")
    bad_magic = bytes(blob)
    with pytest.raises(SketchFormatError):
        SetSketch.deserialize(b"XXXX" + bad_magic[4:])
    bad_version = bytearray(blob)
    bad_version[4] = FORMAT_VERSION + 1
    with pytest.raises(SketchFormatError):
        SetSketch.deserialize(bytes(bad_version))
    with pytest.raises(SketchFormatError):
        SetSketch.deserialize(bytes(blob[:-1]))  # truncated payload
    bad_variant = bytearray(blob)
    bad_variant[5] = 9
    with pytest.raises(SketchFormatError):
        SetSketch.deserialize(bytes(bad_variant))
    # register value above q+1
    bad_reg = bytearray(blob)
    bad_reg[30:34] = (CFG.q + 2).to_bytes(4, "little")
    with pytest.raises(SketchFormatError):
        SetSketch.deserialize(bytes(bad_reg))
