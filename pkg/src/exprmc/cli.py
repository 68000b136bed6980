"""Command-line interface.

Subcommands: fit-prior, generate, sample, predict, validate-equilibrium.
Exit codes: 0 success, 1 validation or usage error, 2 runtime failure,
3 threshold failure (validate-equilibrium only).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .ensembles import (
    PredictiveEnsemble,
    mdl_model,
    median_predictive_model,
    prediction_table,
)
from .fitting import Dataset, FitConfig
from .ops import OperationSet, default_operation_set, operation_set
from .priors import (
    PriorFitConfig,
    corpus_stats,
    fit_hyperparameters,
    is_stats_file,
    read_params_tsv,
    read_stats_tsv,
    uniform_prior,
    write_params_tsv,
)
from .sampling import ModelTrace, SamplerConfig, run
from .synthetic import ExpressionSpec, RosslerSpec, expression_dataset, rossler_dataset
from .trees import ParseError
from .validate import equilibrium_report


class CliError(Exception):
    """Input or configuration problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _opset_from_args(args, n_vars: int, n_params: int) -> OperationSet:
    if args.ops in (None, "default"):
        return default_operation_set(n_vars, n_params)
    names = [name.strip() for name in args.ops.split(",") if name.strip()]
    return operation_set(names, n_vars, n_params)


def _sampler_config(args) -> SamplerConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = SamplerConfig.from_dict(json.load(fh))
    else:
        config = SamplerConfig()
    for attr, key in [
        ("steps", "n_steps"),
        ("temps", "ladder_count"),
        ("ladder_base", "ladder_base"),
        ("burn_in", "burn_in"),
        ("thinning", "thinning"),
        ("restarts", "restarts"),
        ("max_size", "max_tree_size"),
        ("seed", "seed"),
    ]:
        value = getattr(args, attr, None)
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "no_forbid_duplicates", False):
        config.forbid_duplicates = False
    if getattr(args, "record_all_temps", False):
        config.record_all_temperatures = True
    return config


def _comment_header(seed, extra: dict | None = None) -> str:
    parts = [f"seed={seed}"]
    for key, value in (extra or {}).items():
        parts.append(f"{key}={value}")
    return "# " + " ".join(parts) + "\n"


def cmd_fit_prior(args) -> int:
    opset = _opset_from_args(args, args.n_vars, args.n_params)
    if is_stats_file(args.corpus):
        targets = read_stats_tsv(args.corpus)
        skipped = []
    else:
        targets, skipped = corpus_stats(args.corpus, opset, strict=not args.skip_errors)
    init = read_params_tsv(args.warm_start, opset) if args.warm_start else None
    config = PriorFitConfig(
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        max_sweeps=args.max_sweeps,
        seed=args.seed,
    )
    params, report = fit_hyperparameters(targets, opset, config, init=init)
    write_params_tsv(params, args.out)
    report_payload = {
        "seed": args.seed,
        "converged": report.converged,
        "n_sweeps": report.n_sweeps,
        "max_stat_rel_error": report.max_stat_rel_error,
        "skipped_corpus_lines": skipped,
        "history": report.history,
    }
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report_payload, fh, indent=2)
    status = "converged" if report.converged else "NOT CONVERGED (best-so-far returned)"
    print(f"fit-prior: {status} after {report.n_sweeps} sweeps; "
          f"worst statistic error {report.max_stat_rel_error:.3f}")
    print(f"wrote {args.out} and {args.report}")
    return 0


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def cmd_generate(args) -> int:
    if args.kind == "expression":
        if not args.expression or not args.ranges:
            raise CliError("expression generation needs --expression and --ranges")
        ranges = []
        for part in args.ranges.split(","):
            low, high = part.split(":")
            ranges.append((float(low), float(high)))
        theta = _parse_floats(args.theta) if args.theta else ()
        n_vars = len(ranges)
        opset = _opset_from_args(args, n_vars, max(len(theta), args.n_params))
        spec = ExpressionSpec(
            expression=args.expression,
            theta=theta,
            ranges=tuple(ranges),
            n_points=args.n,
            noise_sigma=args.sigma,
        )
        data = expression_dataset(spec, opset, seed=args.seed)
    else:
        initial = _parse_floats(args.initial)
        if len(initial) != 3:
            raise CliError("--initial needs three comma-separated values")
        spec = RosslerSpec(
            a=args.a,
            b=args.b,
            c=args.c,
            target=args.target,
            noise_sigma=args.sigma,
            n_points=args.n,
            step=args.step,
            span=args.span,
            transient=args.transient,
            initial_state=initial,
        )
        data = rossler_dataset(spec, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args.seed, {"kind": args.kind}))
    with open(args.out, "a", encoding="utf-8", newline="") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(list(data.x_names) + [data.y_name])
        for row, target in zip(data.x, data.y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    print(f"wrote {data.n_points} rows to {args.out}")
    return 0


def cmd_sample(args) -> int:
    data = Dataset.from_csv(args.data, target=args.target)
    config = _sampler_config(args)
    opset = _opset_from_args(args, data.n_vars, args.n_params)
    if args.prior == "uniform":
        prior = uniform_prior(opset)
    else:
        prior = read_params_tsv(args.prior, opset)

    def progress(restart, step, best_dl, accept_rate):
        if args.verbose:
            sys.stderr.write(
                f"restart {restart} step {step}: best DL {best_dl:.3f}, "
                f"T0 acceptance {accept_rate:.3f}\n"
            )

    trace = run(data, prior, config, progress=progress)
    trace.write_jsonl(args.out)
    best = min((r.description_length for r in trace.rows), default=math.inf)
    print(f"wrote {len(trace.rows)} recorded states to {args.out}; best DL {best:.3f}")
    return 0


def _query_matrix(path: str, n_vars: int, drop: str | None) -> tuple[np.ndarray, list[str]]:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in _csv.reader(fh) if row and not row[0].startswith("#")]
    header, body = rows[0], rows[1:]
    columns = [name for name in header if name != drop]
    if len(columns) != n_vars:
        raise CliError(
            f"query file has {len(columns)} usable columns, model expects {n_vars}"
        )
    idx = [header.index(name) for name in columns]
    matrix = np.array([[float(row[i]) for i in idx] for row in body])
    return matrix, columns


def cmd_predict(args) -> int:
    trace = ModelTrace.read_jsonl(args.trace)
    opset = trace.opset()
    ensemble = PredictiveEnsemble.from_trace(trace, opset)
    if args.mode == "mdl":
        best = mdl_model(ensemble)
        print(f"MDL model: {best.tree}")
        print(f"description length: {best.description_length:.6f}")
        if best.named_theta:
            print("parameters: " + ", ".join(f"{k}={v:.6g}" for k, v in best.named_theta))
        return 0
    x, _ = _query_matrix(args.data, opset.n_vars, args.drop_target)
    quantiles = _parse_floats(args.quantiles)
    if len(quantiles) != 2:
        raise CliError("--quantiles needs two comma-separated probabilities")
    if args.mode == "median":
        table = prediction_table(ensemble, x, quantiles=(quantiles[0], quantiles[1]))
        _write_prediction_csv(args.out, x, table, args.seed)
        print(f"wrote {len(table)} predictions to {args.out}")
        return 0
    member, distance = median_predictive_model(ensemble, x)
    print(f"median predictive model: {member.tree}")
    print(f"mean absolute distance to median curve: {distance:.6g}")
    predictions = member.predict(x)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(args.seed, {"mode": "median-model"}))
        names = [f"x{i + 1}" for i in range(x.shape[1])]
        fh.write(",".join(names + ["prediction"]) + "\n")
        for row, value in zip(x, predictions):
            cells = [repr(float(v)) for v in row] + [repr(float(value))]
            fh.write(",".join(cells) + "\n")
    print(f"wrote predictions to {args.out}")
    return 0


def _write_prediction_csv(path: str, x: np.ndarray, table: list[dict], seed) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_comment_header(seed, {"mode": "median"}))
        names = [f"x{i + 1}" for i in range(x.shape[1])]
        fh.write(",".join(names + ["median", "low", "high", "n_finite_members"]) + "\n")
        for row, entry in zip(x, table):
            cells = [repr(float(v)) for v in row]
            cells += [
                repr(entry["median"]),
                repr(entry["low"]),
                repr(entry["high"]),
                str(entry["n_finite_members"]),
            ]
            fh.write(",".join(cells) + "\n")


def cmd_validate_equilibrium(args) -> int:
    report = equilibrium_report(
        n_steps=args.steps,
        seed=args.seed,
        use_data=not args.no_data,
        tv_threshold=args.tv_threshold,
        max_size=args.max_size,
    )
    report.pop("audit_rows")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    print(
        f"validate-equilibrium: {report['n_trees']} trees, "
        f"{report['n_expressions']} distinct expressions, "
        f"TV distance {report['tv_distance']:.4f} "
        f"(threshold {report['tv_threshold']}), "
        f"detailed balance violation {report['detailed_balance_violation']:.2e}"
    )
    if not report["passed"]:
        print("FAILED: visit frequencies did not match the exact posterior")
        return 3
    print("PASSED")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="exprmc", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1,
                        help="accepted for compatibility; this build is single-threaded")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--config", help="JSON file with sampler settings")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-prior", parents=[common],
                       help="fit prior hyperparameters to a corpus or stats table")
    p.add_argument("--corpus", required=True, help="prefix-expression corpus or stats TSV")
    p.add_argument("--ops", default="default")
    p.add_argument("--n-vars", type=int, required=True)
    p.add_argument("--n-params", type=int, required=True)
    p.add_argument("--out", required=True, help="output parameter TSV")
    p.add_argument("--report", default="prior_fit_report.json")
    p.add_argument("--batch-size", type=int, default=100_000)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--max-sweeps", type=int, default=500)
    p.add_argument("--skip-errors", action="store_true",
                   help="skip unparseable corpus lines instead of aborting")
    p.add_argument("--warm-start", help="parameter TSV to start from")
    p.set_defaults(func=cmd_fit_prior)

    p = sub.add_parser("generate", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--kind", choices=["expression", "rossler"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--expression")
    p.add_argument("--theta", default="")
    p.add_argument("--ranges", help="per-variable low:high pairs, comma separated")
    p.add_argument("--ops", default="default")
    p.add_argument("--n-params", type=int, default=0)
    p.add_argument("--a", type=float, default=0.2)
    p.add_argument("--b", type=float, default=0.2)
    p.add_argument("--c", type=float, default=5.7)
    p.add_argument("--target", choices=["dx", "dy", "dz"], default="dx")
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--span", type=float, default=500.0)
    p.add_argument("--transient", type=float, default=100.0)
    p.add_argument("--initial", default="1,1,1")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", parents=[common], help="sample models for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--prior", default="uniform", help="'uniform' or a parameter TSV path")
    p.add_argument("--ops", default="default")
    p.add_argument("--n-params", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--temps", type=int)
    p.add_argument("--ladder-base", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thinning", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-size", type=int)
    p.add_argument("--no-forbid-duplicates", action="store_true")
    p.add_argument("--record-all-temps", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("predict", parents=[common], help="predict from a sampled trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--mode", choices=["mdl", "median", "median-model"], required=True)
    p.add_argument("--data", help="CSV of query points (required for median modes)")
    p.add_argument("--drop-target", help="column name to ignore in the query CSV")
    p.add_argument("--quantiles", default="0.05,0.95")
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate-equilibrium", parents=[common],
                       help="restricted-space equilibrium experiment")
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--tv-threshold", type=float, default=0.05)
    p.add_argument("--no-data", action="store_true")
    p.add_argument("--max-size", type=int, default=7)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_validate_equilibrium)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads > 1:
        sys.stderr.write("note: --threads > 1 has no effect; this build is single-threaded\n")
    try:
        return args.func(args)
    except (CliError, ParseError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        sys.stderr.write(f"runtime failure: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
