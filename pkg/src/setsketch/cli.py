"""Command-line entry points for experiments and sketch file operations.

Subcommands ``cardinality``, ``joint``, and ``throughput`` run the
corresponding harness experiment and emit CSV (stdout or --out).  ``audit``
checks the special-function series against their analytic bounds and exits
non-zero when any grid fails.  ``sketch build|merge|estimate`` operates on
serialized sketch files.

Exit codes: 0 success, 2 argument or input problems, 3 audit failure.
"""

import argparse
import sys

from . import estimation, harness
from .baselines import deserialize_sketch
from .sketches import SketchFormatError


def _add_sketch_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--sketch", default="setsketch1", choices=harness.SKETCH_KINDS,
        help="sketch family (default: setsketch1)",
    )
    parser.add_argument("--m", type=int, default=256, help="registers (default: 256)")
    parser.add_argument("--b", type=float, default=2.0, help="base (default: 2.0)")
    parser.add_argument(
        "--a", type=float, default=20.0,
        help="point process rate (default: 20; the ghll kind always uses 1/m)",
    )
    parser.add_argument(
        "--q", type=int, default=None,
        help="register ceiling q (default: sized for n up to 1e6)",
    )


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="CSV path (default: stdout)")


def _int_list(text: str):
    return tuple(int(part) for part in text.split(",") if part != "")


def _float_list(text: str):
    return tuple(float(part) for part in text.split(",") if part != "")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setsketch",
        description="Mergeable register sketches: experiments and file tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_card = sub.add_parser(
        "cardinality", help="bias/RMSE/kurtosis of cardinality estimation"
    )
    _add_sketch_options(p_card)
    _add_run_options(p_card)
    p_card.add_argument(
        "--cardinality-grid", type=_int_list,
        default=harness.DEFAULT_CARDINALITY_GRID,
        help="comma list of set sizes (default: 8 log-spaced in 1..1e6)",
    )

    p_joint = sub.add_parser(
        "joint", help="RMSE of joint estimators over a (jaccard, ratio) grid"
    )
    _add_sketch_options(p_joint)
    _add_run_options(p_joint)
    p_joint.add_argument("--union-size", type=int, default=10000)
    p_joint.add_argument(
        "--jaccard-grid", type=_float_list, default=(0.01, 0.1, 0.5)
    )
    p_joint.add_argument("--ratio-grid", type=_float_list, default=(1.0, 10.0, 100.0))
    p_joint.add_argument(
        "--known-cardinalities", choices=("true", "false"), default="true",
        help="include estimator rows that use the true cardinalities",
    )

    p_thr = sub.add_parser(
        "throughput", help="insertion cost and inner-loop work per element"
    )
    _add_sketch_options(p_thr)
    _add_run_options(p_thr)
    p_thr.set_defaults(trials=3)
    p_thr.add_argument(
        "--cardinality-grid", type=_int_list,
        default=harness.DEFAULT_CARDINALITY_GRID,
        help="comma list of set sizes (default: 8 log-spaced in 1..1e6)",
    )

    p_audit = sub.add_parser(
        "audit", help="special-function series vs their analytic bounds"
    )
    p_audit.add_argument(
        "--bases", type=_float_list, default=(1.001, 1.2, 2.0),
        help="comma list of bases to audit (default: 1.001,1.2,2)",
    )
    p_audit.add_argument("--out", default=None, help="CSV path (default: stdout)")

    p_sketch = sub.add_parser("sketch", help="build/merge/estimate sketch files")
    sketch_sub = p_sketch.add_subparsers(dest="sketch_command", required=True)

    p_build = sketch_sub.add_parser("build", help="build a sketch file from keys")
    _add_sketch_options(p_build)
    p_build.add_argument("--out", required=True, help="output sketch file")
    source = p_build.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--input", default=None,
        help="text file with one integer key per line",
    )
    source.add_argument(
        "--n", type=int, default=None, help="generate this many random keys"
    )
    p_build.add_argument("--seed", type=int, default=0)

    p_merge = sketch_sub.add_parser("merge", help="merge sketch files")
    p_merge.add_argument("--out", required=True, help="output sketch file")
    p_merge.add_argument("inputs", nargs="+", help="two or more sketch files")

    p_est = sketch_sub.add_parser("estimate", help="print a cardinality estimate")
    p_est.add_argument("input", help="sketch file")
    p_est.add_argument(
        "--estimator", default=None,
        choices=("raw", "corrected", "ml", "minwise"),
        help="default: raw for point-sequence sketches, corrected for ghll, "
        "minwise for minhash",
    )
    return parser


def _write_rows(rows, columns, out_path) -> None:
    if out_path is None:
        harness.write_csv(rows, columns, sys.stdout)
    else:
        with open(out_path, "w", encoding="ascii") as handle:
            harness.write_csv(rows, columns, handle)


def _experiment_spec(args, kind: str) -> harness.ExperimentSpec:
    fields = {
        "kind": kind,
        "sketch": args.sketch,
        "m": args.m,
        "b": args.b,
        "a": args.a,
        "q": args.q,
        "trials": args.trials,
        "seed": args.seed,
    }
    if hasattr(args, "cardinality_grid"):
        fields["cardinality_grid"] = args.cardinality_grid
    if kind == "joint":
        fields.update(
            union_size=args.union_size,
            jaccard_grid=args.jaccard_grid,
            ratio_grid=args.ratio_grid,
            known_cardinalities=(args.known_cardinalities == "true"),
        )
    return harness.ExperimentSpec(**fields)


def _read_keys(path: str):
    keys = []
    with open(path, "r", encoding="ascii") as handle:
        for line in handle:
            line = line.strip()
            if line:
                keys.append(int(line, 0))
    return keys


def _default_estimator(sketch) -> str:
    from .baselines import GeneralizedHyperLogLog, MinHash

    if isinstance(sketch, MinHash):
        return "minwise"
    if isinstance(sketch, GeneralizedHyperLogLog):
        return "corrected"
    return "raw"


def _run_sketch_command(args) -> int:
    if args.sketch_command == "build":
        spec = harness.ExperimentSpec(
            kind="cardinality", sketch=args.sketch, m=args.m, b=args.b,
            a=args.a, q=args.q, trials=1, seed=args.seed,
        )
        sketch = harness.make_sketch(spec)
        if args.input is not None:
            keys = _read_keys(args.input)
        else:
            if args.n < 0:
                raise ValueError(f"--n must be non-negative, got {args.n}")
            keys = harness.generate_set(
                args.n, harness.RandomStream(args.seed)
            )
        sketch.insert_all(keys)
        with open(args.out, "wb") as handle:
            handle.write(sketch.serialize())
        return 0
    if args.sketch_command == "merge":
        if len(args.inputs) < 2:
            raise ValueError("merge needs at least two sketch files")
        sketches = []
        for path in args.inputs:
            with open(path, "rb") as handle:
                sketches.append(deserialize_sketch(handle.read()))
        merged = sketches[0]
        for other in sketches[1:]:
            merged = merged.merge(other)
        with open(args.out, "wb") as handle:
            handle.write(merged.serialize())
        return 0
    with open(args.input, "rb") as handle:
        sketch = deserialize_sketch(handle.read())
    estimator = args.estimator or _default_estimator(sketch)
    if estimator == "minwise":
        if not hasattr(sketch, "components"):
            raise ValueError("the minwise estimator needs a minhash sketch file")
        value = estimation.estimate_cardinality_minwise(sketch.components)
    else:
        if not hasattr(sketch, "cardinality"):
            raise ValueError(
                f"estimator {estimator!r} needs a register sketch file"
            )
        value = sketch.cardinality(estimator)
    print(value)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "cardinality":
            rows = harness.run_cardinality_experiment(
                _experiment_spec(args, "cardinality")
            )
            _write_rows(rows, harness.CARDINALITY_COLUMNS, args.out)
            return 0
        if args.command == "joint":
            rows = harness.run_joint_experiment(_experiment_spec(args, "joint"))
            _write_rows(rows, harness.JOINT_COLUMNS, args.out)
            return 0
        if args.command == "throughput":
            rows = harness.run_throughput_benchmark(
                _experiment_spec(args, "throughput")
            )
            _write_rows(rows, harness.THROUGHPUT_COLUMNS, args.out)
            return 0
        if args.command == "audit":
            rows, all_ok = harness.run_special_function_audit(args.bases)
            _write_rows(rows, harness.AUDIT_COLUMNS, args.out)
            return 0 if all_ok else 3
        if args.command == "sketch":
            return _run_sketch_command(args)
    except (ValueError, OSError, SketchFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
