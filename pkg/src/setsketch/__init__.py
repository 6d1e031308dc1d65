"""Mergeable set sketches on a tunable base-b level scale.

One register layout spans the whole accuracy/space continuum: bases near 1
behave like minwise signatures, base 2 and beyond like log-log counters,
and everything in between trades register width against estimation error
smoothly.  The package bundles the sketches themselves, cardinality and
joint (overlap) estimators, and a reproducible experiment harness with a
CLI front end.
"""

from .baselines import (
    GeneralizedHyperLogLog,
    JointCounts,
    MinHash,
    compare_registers,
    deserialize_sketch,
    ghll_joint_applicable,
    setsketch_to_minhash_values,
)
from .estimation import (
    JointQuantities,
    collision_probability_bounds,
    derive_joint_quantities,
    estimate_cardinality_corrected,
    estimate_cardinality_minwise,
    estimate_cardinality_ml,
    estimate_cardinality_raw,
    estimate_jaccard_inclusion_exclusion,
    estimate_jaccard_lsh_bounds,
    estimate_jaccard_minwise,
    estimate_jaccard_ml,
    fisher_information_joint,
    fisher_information_joint_limit,
    jaccard_upper_bound,
    joint_quantity_derivatives,
    log_likelihood_joint,
    p_b,
    rsd_theoretical,
    sigma,
    tau,
    xi,
    xi_error_bound,
    zeta,
    zeta_error_bound,
)
from .harness import (
    DEFAULT_CARDINALITY_GRID,
    ExperimentSpec,
    generate_pair,
    generate_set,
    make_sketch,
    run_cardinality_experiment,
    run_joint_experiment,
    run_special_function_audit,
    run_throughput_benchmark,
    write_csv,
)
from .randomness import (
    GOLDEN_GAMMA,
    PermutationSampler,
    RandomStream,
    mix64,
    split_seed,
    stream_from_seed,
)
from .sketches import (
    ConfigReport,
    SetSketch,
    SketchConfig,
    SketchFormatError,
    VARIANT_GHLL,
    VARIANT_MINHASH,
    VARIANT_SETSKETCH_1,
    VARIANT_SETSKETCH_2,
    new_sketch,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigReport",
    "DEFAULT_CARDINALITY_GRID",
    "ExperimentSpec",
    "GOLDEN_GAMMA",
    "GeneralizedHyperLogLog",
    "JointCounts",
    "JointQuantities",
    "MinHash",
    "PermutationSampler",
    "RandomStream",
    "SetSketch",
    "SketchConfig",
    "SketchFormatError",
    "VARIANT_GHLL",
    "VARIANT_MINHASH",
    "VARIANT_SETSKETCH_1",
    "VARIANT_SETSKETCH_2",
    "collision_probability_bounds",
    "compare_registers",
    "derive_joint_quantities",
    "deserialize_sketch",
    "estimate_cardinality_corrected",
    "estimate_cardinality_minwise",
    "estimate_cardinality_ml",
    "estimate_cardinality_raw",
    "estimate_jaccard_inclusion_exclusion",
    "estimate_jaccard_lsh_bounds",
    "estimate_jaccard_minwise",
    "estimate_jaccard_ml",
    "fisher_information_joint",
    "fisher_information_joint_limit",
    "generate_pair",
    "generate_set",
    "ghll_joint_applicable",
    "jaccard_upper_bound",
    "joint_quantity_derivatives",
    "log_likelihood_joint",
    "make_sketch",
    "mix64",
    "new_sketch",
    "p_b",
    "rsd_theoretical",
    "run_cardinality_experiment",
    "run_joint_experiment",
    "run_special_function_audit",
    "run_throughput_benchmark",
    "setsketch_to_minhash_values",
    "sigma",
    "split_seed",
    "stream_from_seed",
    "tau",
    "validate_config",
    "write_csv",
    "xi",
    "xi_error_bound",
    "zeta",
    "zeta_error_bound",
]
