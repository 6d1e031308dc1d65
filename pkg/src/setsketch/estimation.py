"""Cardinality and joint-quantity estimators over register sketches.

Everything here is a pure function of register contents (or their
histogram / comparison tallies) plus the config parameters; nothing mutates
a sketch.  The naming convention for the recurring analytic pieces:

* ``xi(b, x, power)``: the near-constant periodic factor appearing in the
  moments of register sums; its deviation from 1 bounds the bias and the
  excess dispersion of the raw estimator.
* ``zeta(b, x1, x2)``: the companion sum approximating x2 - x1, used the
  same way for covariances.
* ``sigma(b, x)`` / ``tau(b, x)``: the convex corrections applied to the
  count of unset (resp. saturated) registers by the range-corrected
  cardinality estimator.
* ``p_b(b, x)``: probability that one sketch's register strictly exceeds
  the other's, as a function of the effective private-share argument x;
  the bridge between register comparisons and set overlap.

All series are evaluated term by term with explicit guards against
overflow in the double-exponential pieces; every term is non-negative, so
summation order only matters at the ulp level.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.optimize import minimize_scalar

_TWO_PI_SQ = 2.0 * math.pi * math.pi
# Stop a series side after this many consecutive negligible terms.
_QUIET_TERMS = 8
# Hard cap per series side; bases this close to 1 need a different method.
_MAX_SERIES_STEPS = 5_000_000
# exp() underflows to 0 below roughly -745; beyond that a term is dead.
_EXP_FLOOR = -745.0
_EXP_CEIL = 709.0


def _require_base(b: float) -> float:
    b = float(b)
    if not b > 1.0:
        raise ValueError(f"base must exceed 1, got {b}")
    return b


def _xi_term(log_b: float, power: int, t: float) -> float:
    # b^(power*t) * exp(-b^t), evaluated as exp(power*t*ln b - b^t).
    s = t * log_b
    if s > _EXP_CEIL:
        return 0.0
    arg = power * s - math.exp(s)
    if arg < _EXP_FLOOR:
        return 0.0
    return math.exp(arg)


def xi(b: float, x: float, power: int = 1, tol: float = 1e-15) -> float:
    """Periodic series sum_v b^(power (x-v)) e^(-b^(x-v)), normalized.

    Result has period 1 in x and stays within a known, rapidly shrinking
    distance of 1 as b decreases (see :func:`xi_error_bound`).  Terms decay
    double-exponentially away from the peak, so the sum walks outward from
    v = round(x) and retires each direction after a run of negligible terms.
    """
    b = _require_base(b)
    if power < 1:
        raise ValueError(f"power must be a positive integer, got {power}")
    log_b = math.log(b)
    norm = math.gamma(power) / log_b
    center = round(x)
    total = _xi_term(log_b, power, x - center)
    for direction in (1, -1):
        quiet = 0
        step = 1
        while quiet < _QUIET_TERMS:
            term = _xi_term(log_b, power, x - (center + direction * step))
            total += term
            quiet = quiet + 1 if term <= tol * norm else 0
            step += 1
            if step > _MAX_SERIES_STEPS:
                raise RuntimeError(
                    f"series did not settle within {_MAX_SERIES_STEPS} terms "
                    f"(b = {b} too close to 1 for this evaluation)"
                )
    return total / norm


def xi_error_bound(b: float, power: int = 1) -> float:
    """Analytic bound on |xi(b, x, power) - 1|, any x.

    Shrinks double-exponentially as b -> 1; evaluated in log space so it
    underflows cleanly to 0 instead of overflowing sinh.
    """
    b = _require_base(b)
    log_b = math.log(b)
    y = _TWO_PI_SQ / log_b
    if power == 1:
        scale = log_b / _TWO_PI_SQ
    elif power == 2:
        scale = log_b ** 3 / (_TWO_PI_SQ * (log_b ** 2 + 4.0 * math.pi ** 2))
    else:
        raise ValueError(f"no bound available for power {power}")
    # bound = 2 / (sqrt(sinh(y) * scale) - 1)
    if y > _EXP_CEIL:
        half_log = 0.5 * (y - math.log(2.0) + math.log(scale))
        if half_log > _EXP_CEIL:
            return 0.0
        return 2.0 / (math.exp(half_log) - 1.0)
    root = math.sqrt(math.sinh(y) * scale)
    if root <= 1.0:
        return math.inf
    return 2.0 / (root - 1.0)


def _exp_neg_pow(log_b: float, t: float) -> float:
    # exp(-b^t) with overflow guard.
    s = t * log_b
    if s > _EXP_CEIL:
        return 0.0
    return math.exp(-math.exp(s))


def zeta(b: float, x1: float, x2: float, tol: float = 1e-15) -> float:
    """Series sum_v (e^(-b^(x1-v)) - e^(-b^(x2-v))), close to x2 - x1.

    Shares its relative error bound with xi at power 1.  Antisymmetric in
    (x1, x2); zero when they coincide.
    """
    b = _require_base(b)
    if x2 < x1:
        return -zeta(b, x2, x1, tol)
    if x2 == x1:
        return 0.0
    log_b = math.log(b)
    scale = max(x2 - x1, 1.0)
    center = round(0.5 * (x1 + x2))

    def term(v: float) -> float:
        return _exp_neg_pow(log_b, x1 - v) - _exp_neg_pow(log_b, x2 - v)

    total = term(center)
    for direction in (1, -1):
        quiet = 0
        step = 1
        while quiet < _QUIET_TERMS:
            t = term(center + direction * step)
            total += t
            quiet = quiet + 1 if t <= tol * scale else 0
            step += 1
            if step > _MAX_SERIES_STEPS:
                raise RuntimeError(
                    f"series did not settle within {_MAX_SERIES_STEPS} terms "
                    f"(b = {b} too close to 1 for this evaluation)"
                )
    return total


def zeta_error_bound(b: float) -> float:
    """Analytic bound on the relative error |zeta/(x2-x1) - 1|."""
    return xi_error_bound(b, power=1)


def sigma(b: float, x: float, tol: float = 1e-15) -> float:
    """Low-range correction: x + (b-1) sum_{k>=1} b^(k-1) x^(b^k).

    Defined on [0, 1]; sigma(0) = 0 and the series diverges at x = 1, so
    arguments within 1e-12 of 1 return +inf directly.  For b close to 1 the
    terms crest only after millions of k, so the series is evaluated in
    geometrically growing vectorized blocks rather than one term at a time.
    """
    b = _require_base(b)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x > 1.0 - 1e-12:
        return math.inf
    log_b = math.log(b)
    log_x = math.log(x)
    total = x
    k0 = 1
    chunk = 1024
    with np.errstate(over="ignore"):
        while True:
            ks = np.arange(k0, k0 + chunk, dtype=np.float64)
            # term_k = b^(k-1) x^(b^k); b^k overflowing to inf sends the
            # exponent to -inf and the term cleanly to 0.
            args = (ks - 1.0) * log_b + np.exp(ks * log_b) * log_x
            terms = np.exp(args)
            contribution = (b - 1.0) * float(terms.sum())
            total += contribution
            past_peak = terms[-1] <= terms[0]
            if past_peak and contribution < 0.25 * tol * total:
                break
            k0 += chunk
            chunk = min(2 * chunk, 1 << 17)
    return total


def tau(b: float, x: float, tol: float = 1e-15) -> float:
    """High-range correction: 1 - x + (b-1) sum_{k>=0} b^(-k-1) (x^(b^-k) - 1).

    Defined on [0, 1] with tau(0) = tau(1) = 0.  Terms are negative and die
    off at ratio b^-2; evaluated in vectorized blocks like :func:`sigma`.
    """
    b = _require_base(b)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    log_b = math.log(b)
    log_x = math.log(x)
    total = 1.0 - x
    k0 = 0
    chunk = 1024
    while True:
        ks = np.arange(k0, k0 + chunk, dtype=np.float64)
        terms = (b - 1.0) * np.exp(-(ks + 1.0) * log_b) * np.expm1(
            np.exp(-ks * log_b) * log_x
        )
        contribution = float(terms.sum())
        total += contribution
        # Geometric tail: everything past this block is smaller than the
        # block's own contribution once the ratio has fallen under b^-2.
        if -contribution < 0.25 * tol * max(abs(total), 1e-300):
            break
        k0 += chunk
        chunk = min(2 * chunk, 1 << 17)
    return total


def p_b(b: float, x: float) -> float:
    """Register dominance probability: -log1p(-x (b-1)/b) / ln b.

    Monotone on [0, 1] with p_b(b, 0) = 0 and p_b(b, 1) = 1; tends to x
    itself as b -> 1.
    """
    b = _require_base(b)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [0, 1], got {x}")
    return -math.log1p(-x * (b - 1.0) / b) / math.log(b)


def rsd_theoretical(b: float, m: int) -> float:
    """Asymptotic relative standard deviation of the raw estimator.

    sqrt(((b+1)/(b-1)) ln b - 1) / sqrt(m); decreases towards 1/sqrt(m)
    as b -> 1.
    """
    b = _require_base(b)
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    log_b = math.log(b)
    return math.sqrt((b + 1.0) / (b - 1.0) * log_b - 1.0) / math.sqrt(m)


def estimate_cardinality_raw(registers, config) -> float:
    """Closed-form estimate m (1 - 1/b) / (a ln b sum_i b^-K_i).

    Asymptotically unbiased with relative dispersion
    :func:`rsd_theoretical`; degrades when registers sit clamped at 0 or
    q+1, which the corrected estimator repairs.
    """
    regs = np.asarray(registers, dtype=np.int64)
    if regs.size != config.m:
        raise ValueError(f"expected {config.m} registers, got {regs.size}")
    if regs.size and (regs.min() < 0 or regs.max() > config.q + 1):
        raise ValueError(f"register values must lie in [0, {config.q + 1}]")
    denom = float(config.powers[regs].sum())
    num = config.m * (1.0 - 1.0 / config.b)
    return num / (config.a * math.log(config.b) * denom)


@lru_cache(maxsize=65536)
def _sigma_cached(b: float, ratio: float) -> float:
    return sigma(b, ratio)


@lru_cache(maxsize=65536)
def _tau_cached(b: float, ratio: float) -> float:
    return tau(b, ratio)


def estimate_cardinality_corrected(histogram, config) -> float:
    """Range-corrected estimate from the register value histogram.

    Replaces the C_0 and C_{q+1} contributions of the raw denominator by
    convex corrections, removing clamping bias at both ends of the scale.
    Coincides with the raw estimator exactly when no register is clamped.
    Returns 0 for an all-zero histogram and +inf for an all-saturated one.
    """
    hist = np.asarray(histogram, dtype=np.int64)
    m, b, q = config.m, config.b, config.q
    if hist.size != q + 2:
        raise ValueError(f"expected {q + 2} histogram bins, got {hist.size}")
    if hist.min() < 0 or int(hist.sum()) != m:
        raise ValueError("histogram must be non-negative and sum to m")
    c_zero = int(hist[0])
    c_top = int(hist[q + 1])
    if c_zero == m:
        return 0.0
    if c_top == m:
        return math.inf
    denom = float((hist[1 : q + 1] * config.powers[1 : q + 1]).sum())
    denom += m * _sigma_cached(b, c_zero / m)
    denom += m * float(config.powers[q]) * _tau_cached(b, 1.0 - c_top / m)
    num = m * (1.0 - 1.0 / b)
    return num / (config.a * math.log(b) * denom)


def _register_log_masses(n: float, config, levels: np.ndarray) -> np.ndarray:
    """log P(K = k) for the clamped register distribution at cardinality n."""
    b, a, q = config.b, config.a, config.q
    out = np.empty(levels.size, dtype=np.float64)
    rate = n * a
    for i, k in enumerate(levels):
        if k == 0:
            out[i] = -rate
        elif k == q + 1:
            p = -math.expm1(-rate * b ** (-q))
            out[i] = math.log(p) if p > 0.0 else -1e308
        else:
            low = rate * b ** float(-k)
            # P = e^-low - e^-(low b) = e^-low (1 - e^(-low (b-1)))
            tail = -math.expm1(-low * (b - 1.0))
            out[i] = (-low + math.log(tail)) if tail > 0.0 else -1e308
    return out


def estimate_cardinality_ml(registers, config) -> float:
    """Maximum-likelihood cardinality under the independent-register model.

    Bounded search over log-cardinality, seeded by the corrected estimate;
    degenerate histograms (all registers unset, or all saturated) fall back
    to the corrected estimator's closed-form answers.
    """
    regs = np.asarray(registers, dtype=np.int64)
    if regs.size != config.m:
        raise ValueError(f"expected {config.m} registers, got {regs.size}")
    if regs.min() < 0 or regs.max() > config.q + 1:
        raise ValueError(f"register values must lie in [0, {config.q + 1}]")
    hist = np.bincount(regs, minlength=config.q + 2)
    start = estimate_cardinality_corrected(hist, config)
    if not (0.0 < start < math.inf):
        return start
    levels = np.nonzero(hist)[0]
    counts = hist[levels].astype(np.float64)

    def negative_log_likelihood(t: float) -> float:
        return -float(counts @ _register_log_masses(math.exp(t), config, levels))

    t0 = math.log(start)
    result = minimize_scalar(
        negative_log_likelihood,
        bounds=(t0 - 8.0, t0 + 8.0),
        method="bounded",
        options={"xatol": 1e-9, "maxiter": 500},
    )
    return math.exp(float(result.x))


def estimate_cardinality_minwise(components) -> float:
    """Cardinality from minwise components: m / sum_i (-ln(1 - V_i)).

    Requires every component to have absorbed at least one element; a
    component still at the initial value 1 makes the estimate undefined.
    """
    comps = np.asarray(components, dtype=np.float64)
    if comps.size == 0:
        raise ValueError("need at least one component")
    if (comps >= 1.0).any():
        raise ValueError("sketch has untouched components (value 1)")
    if (comps < 0.0).any():
        raise ValueError("components must lie in [0, 1)")
    return comps.size / float(-np.log1p(-comps).sum())


def _validate_shares(u: float, v: float) -> None:
    if not (u > 0.0 and v > 0.0):
        raise ValueError(f"cardinality shares must be positive, got u={u}, v={v}")
    if abs(u + v - 1.0) > 1e-9:
        raise ValueError(f"cardinality shares must sum to 1, got {u + v}")


def jaccard_upper_bound(u: float, v: float) -> float:
    """Largest feasible Jaccard index for cardinality shares (u, v)."""
    return min(u / v, v / u)


def log_likelihood_joint(j: float, u: float, v: float, counts, b: float) -> float:
    """Log-likelihood of comparison tallies at Jaccard index j.

    ``counts`` are the (d_plus, d_minus, d_zero) tallies; u and v are the
    two sets' shares of the total cardinality.  Concave in j for b <= e,
    which the estimator relies on; larger bases raise an error there, but
    evaluation alone is defined for any b > 1.
    """
    b = _require_base(b)
    _validate_shares(u, v)
    j_max = jaccard_upper_bound(u, v)
    if not -1e-12 <= j <= j_max + 1e-12:
        raise ValueError(f"jaccard index {j} outside [0, {j_max}]")
    d_plus, d_minus, d_zero = counts
    x_plus = min(max(u - v * j, 0.0), 1.0)
    x_minus = min(max(v - u * j, 0.0), 1.0)
    p_plus = p_b(b, x_plus)
    p_minus = p_b(b, x_minus)
    p_zero = 1.0 - p_plus - p_minus
    total = 0.0
    for d, p in ((d_plus, p_plus), (d_minus, p_minus), (d_zero, p_zero)):
        if d > 0:
            if p <= 0.0:
                return -math.inf
            total += d * math.log(p)
    return total


def estimate_jaccard_ml(counts, n_a: float, n_b: float, b: float) -> float:
    """Maximum-likelihood Jaccard index from comparison tallies.

    Requires 1 < b <= e so the likelihood is concave; the bounded search is
    backed by explicit endpoint candidates, and boundary optima are
    returned exactly (0.0, or the feasibility cap min(u/v, v/u)).
    """
    b = _require_base(b)
    if b > math.e + 1e-12:
        raise ValueError(f"joint ML needs b <= e for concavity, got {b}")
    if not (n_a > 0.0 and n_b > 0.0):
        raise ValueError("cardinalities must be positive")
    total = n_a + n_b
    u = n_a / total
    v = n_b / total
    j_max = jaccard_upper_bound(u, v)

    def objective(j: float) -> float:
        return -log_likelihood_joint(j, u, v, counts, b)

    candidates = [0.0, j_max]
    if j_max > 2e-9:
        result = minimize_scalar(
            objective,
            bounds=(0.0, j_max),
            method="bounded",
            options={"xatol": 1e-9, "maxiter": 200},
        )
        candidates.append(min(max(float(result.x), 0.0), j_max))
    values = [log_likelihood_joint(j, u, v, counts, b) for j in candidates]
    return candidates[int(np.argmax(values))]


def fisher_information_joint(j: float, u: float, v: float, b: float, m: int) -> float:
    """Fisher information per sketch pair about the Jaccard index.

    Diverges (returns +inf) at the feasibility boundary j = min(u/v, v/u),
    where the comparison distribution pins j exactly.
    """
    b = _require_base(b)
    _validate_shares(u, v)
    j_max = jaccard_upper_bound(u, v)
    if not -1e-12 <= j <= j_max + 1e-12:
        raise ValueError(f"jaccard index {j} outside [0, {j_max}]")
    x_plus = min(max(u - v * j, 0.0), 1.0)
    x_minus = min(max(v - u * j, 0.0), 1.0)
    p_plus = p_b(b, x_plus)
    p_minus = p_b(b, x_minus)
    if p_plus <= 0.0 or p_minus <= 0.0:
        return math.inf
    p_zero = 1.0 - p_plus - p_minus
    if p_zero <= 0.0:
        return math.inf
    log_b = math.log(b)
    g_plus = v * b ** p_plus
    g_minus = u * b ** p_minus
    scale = m * (b - 1.0) ** 2 / (b ** 2 * log_b ** 2)
    return scale * (
        g_plus ** 2 / p_plus
        + g_minus ** 2 / p_minus
        + (g_plus + g_minus) ** 2 / p_zero
    )


def fisher_information_joint_limit(j: float, u: float, v: float, m: int) -> float:
    """b -> 1 limit of :func:`fisher_information_joint` (minwise regime)."""
    _validate_shares(u, v)
    j_max = jaccard_upper_bound(u, v)
    if not -1e-12 <= j <= j_max + 1e-12:
        raise ValueError(f"jaccard index {j} outside [0, {j_max}]")
    if j <= 0.0:
        j = 0.0
    if j >= j_max:
        return math.inf
    correction = 1.0 - (u - v) ** 2 * j / (u * v * (1.0 - j) ** 2)
    if correction <= 0.0:
        return math.inf
    if j == 0.0:
        return math.inf
    return m / (j * (1.0 - j)) / correction


def estimate_jaccard_inclusion_exclusion(
    n_a: float, n_b: float, n_union: float
) -> float:
    """(n_a + n_b - n_union) / n_union, trimmed to the feasible range."""
    if not n_union > 0.0:
        raise ValueError(f"union cardinality must be positive, got {n_union}")
    if not (n_a > 0.0 and n_b > 0.0):
        raise ValueError("cardinalities must be positive")
    j = (n_a + n_b - n_union) / n_union
    return min(max(j, 0.0), jaccard_upper_bound(
        n_a / (n_a + n_b), n_b / (n_a + n_b)
    ))


def estimate_jaccard_minwise(counts, u: float, v: float) -> float:
    """Closed-form ML Jaccard index for minwise comparison tallies.

    This is the b -> 1 limit of the joint likelihood, where the maximizer
    admits an explicit root.  ``counts`` must be min-based tallies.
    """
    _validate_shares(u, v)
    d_plus, d_minus, d_zero = counts
    m = d_plus + d_minus + d_zero
    if m <= 0:
        raise ValueError("counts must sum to a positive m")
    term_plus = u * u * (d_zero + d_minus)
    term_minus = v * v * (d_zero + d_plus)
    disc = (term_plus - term_minus) ** 2 + 4.0 * d_plus * d_minus * u * u * v * v
    return (term_plus + term_minus - math.sqrt(disc)) / (2.0 * m * u * v)


def estimate_jaccard_lsh_bounds(d_zero: float, m: int, b: float) -> Tuple[float, float]:
    """(lower, upper) Jaccard bounds from the equal-register fraction alone.

    Single-probe locality-sensitive reading of the sketch: inverts the
    two-sided collision-probability envelope at the observed d_zero / m.
    """
    b = _require_base(b)
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    if not 0.0 <= d_zero <= m:
        raise ValueError(f"d_zero must lie in [0, {m}], got {d_zero}")
    r = d_zero / m
    upper = (b ** r - 1.0) / (b - 1.0)
    lower = max(0.0, 2.0 * (b ** (0.5 * (r + 1.0)) - 1.0) / (b - 1.0) - 1.0)
    return lower, upper


def collision_probability_bounds(j: float, b: float) -> Tuple[float, float]:
    """Envelope (p_min, p_max) for P(registers equal) at Jaccard index j.

    Equal-cardinality case; the width of the envelope shrinks like
    (b-1)^2, collapsing onto j itself as b -> 1.
    """
    b = _require_base(b)
    if not 0.0 <= j <= 1.0:
        raise ValueError(f"jaccard index must lie in [0, 1], got {j}")
    log_b = math.log(b)
    p_min = math.log1p(j * (b - 1.0)) / log_b
    p_max = math.log1p(
        j * (b - 1.0) + (1.0 - j) ** 2 * (b - 1.0) ** 2 / (4.0 * b)
    ) / log_b
    return p_min, p_max


@dataclass(frozen=True)
class JointQuantities:
    """All overlap quantities derived from (n_a, n_b, jaccard)."""

    jaccard: float
    union: float
    intersection: float
    difference_ab: float
    difference_ba: float
    cosine: float
    inclusion_ab: float
    inclusion_ba: float


def derive_joint_quantities(n_a: float, n_b: float, j: float) -> JointQuantities:
    """Expand a Jaccard estimate into the full family of overlap measures.

    The estimates are mutually consistent by construction: union equals
    intersection plus both differences, inclusion coefficients land in
    [0, 1], differences are non-negative.
    """
    if not (n_a > 0.0 and n_b > 0.0):
        raise ValueError("cardinalities must be positive")
    total = n_a + n_b
    u = n_a / total
    v = n_b / total
    j_max = jaccard_upper_bound(u, v)
    if not -1e-9 <= j <= j_max * (1.0 + 1e-9) + 1e-12:
        raise ValueError(f"jaccard index {j} outside [0, {j_max}]")
    j = min(max(j, 0.0), j_max)
    union = total / (1.0 + j)
    intersection = total * j / (1.0 + j)
    return JointQuantities(
        jaccard=j,
        union=union,
        intersection=intersection,
        difference_ab=max(0.0, (n_a - n_b * j) / (1.0 + j)),
        difference_ba=max(0.0, (n_b - n_a * j) / (1.0 + j)),
        cosine=min(1.0, intersection / math.sqrt(n_a * n_b)),
        inclusion_ab=min(1.0, intersection / n_a),
        inclusion_ba=min(1.0, intersection / n_b),
    )


def joint_quantity_derivatives(n_a: float, n_b: float, j: float) -> dict:
    """d(quantity)/d(jaccard) at fixed cardinalities.

    Used to propagate the Fisher information of the Jaccard index into
    error predictions for each derived quantity (delta method).
    """
    if not (n_a > 0.0 and n_b > 0.0):
        raise ValueError("cardinalities must be positive")
    total = n_a + n_b
    d = (1.0 + j) ** 2
    return {
        "jaccard": 1.0,
        "union": -total / d,
        "intersection": total / d,
        "difference_ab": -total / d,
        "difference_ba": -total / d,
        "cosine": total / (math.sqrt(n_a * n_b) * d),
        "inclusion_ab": total / (n_a * d),
        "inclusion_ba": total / (n_b * d),
    }
