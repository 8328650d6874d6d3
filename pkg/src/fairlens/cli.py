"""Command line interface.

Commands:
  gen        write a manifest with the standard synthetic encoder family
  eval       evaluate every source in a manifest into a JSON report + CSVs
  adjust     add accuracy-neighborhood residual scores to a report
  correlate  emit Spearman correlation tables from a report
  theorem    analyze the exactly solvable min-mixing counterexample world
  select     run the accuracy-vs-random model selection experiment

Exit codes: 0 success, 1 evaluation/data failure, 2 usage error.
The FAIRLENS_SEED environment variable overrides the manifest seed in eval.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import analysis, reportio, worlds
from .core import FactorSpace, make_rng, RNG_ALGORITHM
from .fairness import Task
from .metrics import METRIC_NAMES


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairlens",
        description="Audit representations for disentanglement and downstream fairness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a manifest for a synthetic encoder family")
    gen.add_argument("--factors", required=True,
                     help="comma-separated factor cardinalities, e.g. 8,8,4,4")
    gen.add_argument("--family", default="standard", choices=["standard"],
                     help="encoder family to generate")
    gen.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    gen.add_argument("--out", default="manifest.json", help="manifest path")
    gen.add_argument("--output-dir", default="fairlens-out",
                     help="output directory recorded in the manifest")

    ev = sub.add_parser("eval", help="evaluate every source in a manifest")
    ev.add_argument("manifest", help="manifest JSON path")
    ev.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                    help="parallel source evaluations (default: cpu count)")
    ev.add_argument("--out-dir", default=None, help="override the manifest output_dir")

    adj = sub.add_parser("adjust", help="add k-NN accuracy-residual scores to a report")
    adj.add_argument("report", help="report JSON path")
    adj.add_argument("--k", type=int, default=5, help="neighborhood size (default 5)")
    adj.add_argument("--include-self", action="store_true",
                     help="keep each record in its own neighborhood")
    adj.add_argument("--out", default=None, help="output path (default: in place)")

    corr = sub.add_parser("correlate", help="emit Spearman correlation tables")
    corr.add_argument("report", help="report JSON path")
    corr.add_argument("--adjusted", action="store_true", help="correlate adjusted scores")
    corr.add_argument("--out-dir", default=None,
                      help="directory for the CSVs (default: report directory)")

    th = sub.add_parser("theorem", help="analyze the min-mixing counterexample world")
    th.add_argument("--q", type=float, default=0.5, help="p(s=1), strictly in (0,1)")
    th.add_argument("--b", type=float, default=0.5, help="p(y=1), strictly in (0,1)")
    th.add_argument("--mode", default="stochastic", choices=["stochastic", "argmax"])
    th.add_argument("--mc", type=int, default=None,
                    help="also report a Monte Carlo unfairness estimate with this many draws")
    th.add_argument("--seed", type=int, default=0, help="seed for the Monte Carlo estimate")
    th.add_argument("--sweep", default=None,
                    help="write a (q, b) grid CSV over {0.1,...,0.9}^2 to this path")

    sel = sub.add_parser("select", help="accuracy-vs-random model selection experiment")
    sel.add_argument("report", help="report JSON path with per-task data")
    sel.add_argument("--trials", type=int, default=1000)
    sel.add_argument("--seed", type=int, default=0)
    return parser


def _parse_factors(parser: argparse.ArgumentParser, text: str) -> FactorSpace:
    try:
        cards = tuple(int(c) for c in text.split(","))
    except ValueError:
        parser.error(f"--factors must be comma-separated integers, got {text!r}")
    if len(cards) < 2:
        parser.error("need at least 2 factors to form (target, sensitive) tasks")
    if any(c < 2 for c in cards):
        parser.error(f"every factor cardinality must be >= 2, got {cards}")
    return FactorSpace.uniform(cards)


def cmd_gen(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    space = _parse_factors(parser, args.factors)
    family = worlds.standard_family(space.num_factors)
    manifest = reportio.Manifest(
        seed=args.seed,
        output_dir=args.output_dir,
        space=space,
        sources=tuple(reportio.SourceDecl(name, encoder=spec) for name, spec in family),
        metric_budget=reportio.MetricBudget(),
        gbt_config=reportio.GbtConfig(),
        fairness_n=10000,
    )
    reportio.write_manifest(manifest, args.out)
    print(f"wrote manifest with {len(family)} sources to {args.out}")
    return 0


def run_eval(manifest: reportio.Manifest, base_dir: str, workers: int) -> dict:
    """Evaluate all sources and assemble the report dict (no file I/O)."""
    indices = list(range(len(manifest.sources)))
    if workers <= 1:
        records = [reportio.evaluate_source(manifest, i, base_dir) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(reportio.evaluate_source, [manifest] * len(indices),
                         indices, [base_dir] * len(indices))
            )
    return {
        "schema_version": reportio.SCHEMA_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "seed": manifest.seed,
        "space": reportio._space_to_dict(manifest.space),
        "budgets": reportio.manifest_to_dict(manifest)["budgets"],
        "records": records,
    }


def _write_eval_outputs(report: dict, out_dir: str) -> None:
    reportio.atomic_write_text(os.path.join(out_dir, "report.json"), reportio.dump_json(report))
    ok = [r for r in report["records"] if r["error"] is None]
    reportio.write_csv(
        os.path.join(out_dir, "unfairness_vs_dci.csv"),
        ["model_id", "dci", "unfairness"],
        [[r["model_id"], r["metrics"].get("dci"), r["unfairness"]] for r in ok],
    )
    reportio.write_csv(
        os.path.join(out_dir, "unfairness_distribution.csv"),
        ["model_id", "unfairness"],
        [[r["model_id"], r["unfairness"]] for r in ok],
    )


def cmd_eval(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    manifest = reportio.load_manifest(args.manifest)
    env_seed = os.environ.get("FAIRLENS_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            parser.error(f"FAIRLENS_SEED must be an integer, got {env_seed!r}")
        manifest = reportio.Manifest(
            seed=seed, output_dir=manifest.output_dir, space=manifest.space,
            sources=manifest.sources, metric_budget=manifest.metric_budget,
            gbt_config=manifest.gbt_config, fairness_n=manifest.fairness_n,
        )
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    out_dir = args.out_dir or manifest.output_dir
    report = run_eval(manifest, base_dir, args.workers)
    _write_eval_outputs(report, out_dir)
    succeeded = sum(1 for r in report["records"] if r["error"] is None)
    print(f"evaluated {succeeded}/{len(report['records'])} sources -> {out_dir}/report.json")
    return 0 if succeeded >= 1 else 1


_ADJUST_FIELDS = list(METRIC_NAMES) + ["unfairness"]


def cmd_adjust(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    report = reportio.load_report(args.report)
    records = reportio.successful_records(report)
    usable = [
        r for r in records
        if r.gbt_accuracy is not None and r.unfairness is not None
        and all(name in r.metrics for name in METRIC_NAMES)
    ]
    if len(usable) < args.k + 1:
        print(
            f"error: need at least {args.k + 1} fully scored records, have {len(usable)}",
            file=sys.stderr,
        )
        return 1
    adjusted: dict[str, dict[str, float]] = {r.model_id: {} for r in usable}
    for name in _ADJUST_FIELDS:
        residuals = analysis.knn_adjust(usable, name, k=args.k, include_self=args.include_self)
        for r, value in zip(usable, residuals):
            adjusted[r.model_id][f"adjusted_{name}"] = value
    for rec in report["records"]:
        if rec["model_id"] in adjusted:
            rec["adjusted"] = adjusted[rec["model_id"]]
    report["adjustment"] = {"k": args.k, "include_self": bool(args.include_self)}
    out = args.out or args.report
    reportio.atomic_write_text(out, reportio.dump_json(report))
    print(f"adjusted {len(usable)} records -> {out}")
    return 0


def cmd_correlate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    report = reportio.load_report(args.report)
    records = reportio.successful_records(report)
    if args.adjusted:
        fields = [f"adjusted_{m}" for m in METRIC_NAMES]
        target = "adjusted_unfairness"
        records = [r for r in records if r.adjusted]
    else:
        fields = list(METRIC_NAMES) + ["gbt_accuracy"]
        target = "unfairness"
        records = [
            r for r in records
            if r.unfairness is not None and all(m in r.metrics for m in METRIC_NAMES)
        ]
    if len(records) < 3:
        print("error: need at least 3 fully scored records", file=sys.stderr)
        return 1
    out_dir = args.out_dir or os.path.dirname(os.path.abspath(args.report))
    suffix = "_adjusted" if args.adjusted else ""
    vs = analysis.correlation_table(records, fields, [target])
    reportio.write_csv(
        os.path.join(out_dir, f"correlations_vs_unfairness{suffix}.csv"),
        ["score", target],
        [[f, vs.values[i, 0]] for i, f in enumerate(fields)],
    )
    matrix = analysis.correlation_table(records, fields, fields)
    reportio.write_csv(
        os.path.join(out_dir, f"correlations_matrix{suffix}.csv"),
        ["score"] + fields,
        [[f] + [matrix.values[i, j] for j in range(len(fields))] for i, f in enumerate(fields)],
    )
    for i, f in enumerate(fields):
        print(f"spearman({f}, {target}) = {vs.values[i, 0]:+.4f}")
    return 0


def cmd_theorem(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    if not (0.0 < args.q < 1.0 and 0.0 < args.b < 1.0):
        parser.error("--q and --b must lie strictly inside (0, 1)")
    world = worlds.MinMixingWorld(q=args.q, b=args.b)
    mode = args.mode
    joint = worlds.joint_distribution(world)
    post = worlds.bayes_posterior(world)
    rates = worlds.prediction_rates(world, mode)
    print(f"min-mixing world: q=p(s=1)={world.q:g}  b=p(y=1)={world.b:g}  mode={mode}")
    print("joint p(y, s, x):")
    for y in (0, 1):
        for s in (0, 1):
            for x in (0, 1):
                print(f"  y={y} s={s} x={x}  {joint[y, s, x]:.6f}")
    print(f"posterior p(y=1|x=0)={post[0]:.6f}  p(y=1|x=1)={post[1]:.6f}")
    print(
        f"p(yhat=1): marginal={rates.marginal:.6f}  "
        f"s=0: {rates.given_s0:.6f}  s=1: {rates.given_s1:.6f}"
    )
    gap = worlds.dp_gap(world, mode)
    mgap = worlds.marginal_gap(world, mode)
    if mode == "stochastic":
        print(
            f"dp gap (s1 - s0):            enumerated={gap:.6f}  "
            f"closed={worlds.dp_gap_stochastic_exact(world):.6f}"
        )
        print(
            f"marginal gap (marginal - s0): enumerated={mgap:.6f}  "
            f"closed={worlds.marginal_gap_stochastic_exact(world):.6f}"
        )
    else:
        print(f"dp gap (s1 - s0):            enumerated={gap:.6f}")
        print(f"marginal gap (marginal - s0): enumerated={mgap:.6f}")
    print(f"unfairness: exact={worlds.unfairness_exact(world, mode):.6f}")
    if args.mc is not None:
        est = worlds.unfairness_monte_carlo(world, mode, args.mc, make_rng(args.seed))
        print(f"unfairness: monte-carlo={est:.6f} (n={args.mc} per s value)")
    if args.sweep:
        header = ["q", "b", "dp_gap_enum", "marginal_gap_enum", "unfairness"]
        if mode == "stochastic":
            header += ["dp_gap_closed", "marginal_gap_closed"]
        rows = []
        for qi in range(1, 10):
            for bi in range(1, 10):
                w = worlds.MinMixingWorld(qi / 10.0, bi / 10.0)
                row = [
                    qi / 10.0, bi / 10.0,
                    worlds.dp_gap(w, mode), worlds.marginal_gap(w, mode),
                    worlds.unfairness_exact(w, mode),
                ]
                if mode == "stochastic":
                    row += [
                        worlds.dp_gap_stochastic_exact(w),
                        worlds.marginal_gap_stochastic_exact(w),
                    ]
                rows.append(row)
        reportio.write_csv(args.sweep, header, rows)
        print(f"wrote sweep grid to {args.sweep}")
    return 0


def cmd_select(parser: argparse.ArgumentParser, args: argparse.Namespace) -> int:
    report = reportio.load_report(args.report)
    records = [
        r for r in reportio.successful_records(report)
        if r.task_unfairness and r.target_accuracy
    ]
    if len(records) < 2:
        print("error: need at least 2 records with per-task data", file=sys.stderr)
        return 1
    tasks = sorted({t for r in records for t in r.task_unfairness})
    groups = []
    for target, sensitive in tasks:
        eligible = [
            r for r in records
            if (target, sensitive) in r.task_unfairness and target in r.target_accuracy
        ]
        if len(eligible) >= 2:
            groups.append((eligible, Task(target, sensitive)))
    if not groups:
        print("error: no task has 2 or more scored records", file=sys.stderr)
        return 1
    fraction = analysis.model_selection_experiment(groups, args.trials, make_rng(args.seed))
    print(f"accuracy-selected model is fairer in {fraction:.4f} of {args.trials} trials")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "gen": cmd_gen,
        "eval": cmd_eval,
        "adjust": cmd_adjust,
        "correlate": cmd_correlate,
        "theorem": cmd_theorem,
        "select": cmd_select,
    }
    return handlers[args.command](parser, args)


if __name__ == "__main__":
    sys.exit(main())
