"""Command-line entry points.

Commands: segment, prepare, eval, search, stability, report.  Each run
writes its fully resolved manifest next to its outputs so the exact
experiment can be replayed later; with one worker and the same seed a
replay reproduces every artifact byte for byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, models, reporting
from .engine import run_search
from .errors import TrendSearchError
from .evaluation import NeuralFoldRunner
from .manifest import (
    load_manifest,
    manifest_engine_params,
    manifest_ladder,
    manifest_space,
    prepare_experiment,
    resolve_manifest,
)
from .space import make_config, validate


def _add_common(p: argparse.ArgumentParser, needs_manifest=True):
    p.add_argument("--manifest", required=needs_manifest, help="path to the run manifest (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    p.add_argument("--workers", type=int, default=None, help="concurrent evaluations (default 1)")
    p.add_argument("--mode", choices=("all", "mlp", "lstm", "cnn"), default=None,
                   help="search across all algorithms or pin a single one")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")


def _resolve(args) -> tuple[dict, Path]:
    doc = load_manifest(args.manifest)
    manifest = resolve_manifest(doc, seed=args.seed, mode=args.mode, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_json(out / "manifest.resolved.json", manifest)
    return manifest, out


def cmd_segment(args) -> int:
    manifest, out = _resolve(args)
    data = prepare_experiment(manifest)
    reporting.write_trends_csv(out / "trends.csv", data.trends)
    w = data.trends.segments[0].duration
    print(f"segments={len(data.trends)} window_size={w} series_length={len(data.series)}")
    return 0


def cmd_prepare(args) -> int:
    manifest, out = _resolve(args)
    data = prepare_experiment(manifest)
    reporting.write_instances_csv(out / "instances.csv", data.instances)
    reporting.write_json(out / "plan.json", reporting.plan_to_dict(data.plan))
    print(f"instances={len(data.instances)} folds={len(data.plan)} "
          f"window_size={data.instances.window_size}")
    return 0


def _load_config(path, space):
    doc = reporting.read_json(path)
    assignments = doc.get("assignments", doc)
    config = make_config(assignments)
    validate(space, config)
    return config


class _CapturingRunner(NeuralFoldRunner):
    """Keeps the most recently trained model so it can be saved."""

    def __init__(self):
        self.last_model = None

    def fit(self, config, windows, targets, budget_epochs, seed):
        self.last_model = super().fit(config, windows, targets, budget_epochs, seed)
        return self.last_model


class _LoadedModelRunner:
    """Evaluates a deserialized model on every fold without retraining."""

    def __init__(self, blob_path):
        self.blob_path = blob_path
        self._model = None

    def fit(self, config, windows, targets, budget_epochs, seed):
        if self._model is None:
            plan = models.build_model(config, window_size=windows.shape[1])
            self._model = models.load_params(plan, self.blob_path)
        return self._model

    def predict(self, model, windows, fold):
        return models.predict(model, windows)


def cmd_eval(args) -> int:
    manifest, out = _resolve(args)
    data = prepare_experiment(manifest)
    space = manifest_space(manifest)
    config = _load_config(args.config, space)
    budget = args.budget or manifest_ladder(manifest).max_budget

    runner = None
    if args.load:
        runner = _LoadedModelRunner(args.load)
    elif args.save_model:
        runner = _CapturingRunner()

    report = evaluation.run_walkforward(
        config, data.instances, data.plan, budget, manifest["seed"],
        split=args.split, runner=runner,
    )
    reporting.write_json(out / "eval_report.json", report.to_dict())
    reporting.write_eval_csv(out / "eval_report.csv", report)
    if args.save_model and runner.last_model is not None:
        models.save_params(runner.last_model, args.save_model)
    print(f"split={report.split} S={report.s!r} D={report.d!r} A={report.a!r} "
          f"failed_folds={report.n_failed}")
    return 0


def cmd_search(args) -> int:
    manifest, out = _resolve(args)
    data = prepare_experiment(manifest)
    space = manifest_space(manifest)
    ladder = manifest_ladder(manifest)
    params = manifest_engine_params(manifest)
    objective = evaluation.make_objective(data.instances, data.plan)

    log_path = out / "observations.jsonl"
    with open(log_path, "w") as log:
        def observer(obs):
            log.write(json.dumps(obs.to_dict(), sort_keys=True) + "\n")
            log.flush()  # keep partial logs on interrupt

        result = run_search(
            space, ladder, params, objective,
            seed=manifest["seed"], workers=manifest["workers"], observer=observer,
        )

    summary = {
        "mode": manifest["mode"],
        "seed": manifest["seed"],
        "ladder": {
            "min_budget": ladder.min_budget,
            "mid_budget": ladder.mid_budget,
            "max_budget": ladder.max_budget,
        },
        "incumbent": result.incumbent.assignments if result.incumbent else None,
        "incumbent_id": result.incumbent.id if result.incumbent else None,
        "incumbent_loss": result.incumbent_loss,
        "accounting": result.accounting,
    }
    reporting.write_json(out / "search_summary.json", summary)
    (out / "incumbent.txt").write_text(
        reporting.incumbent_text(result, manifest["mode"], manifest["seed"])
    )
    print(f"ladder={ladder.levels} incumbent_loss={result.incumbent_loss!r} "
          f"unique_configs={result.accounting['unique_configs']}")
    return 0


def cmd_stability(args) -> int:
    manifest, out = _resolve(args)
    data = prepare_experiment(manifest)
    space = manifest_space(manifest)
    config = _load_config(args.config, space)
    budget = args.budget or manifest_ladder(manifest).max_budget
    n_runs = args.runs or int(manifest["stability"]["n_runs"])
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None

    report = evaluation.run_stability(
        config, data.instances, data.plan, budget,
        n_runs=n_runs, base_seed=manifest["seed"], seeds=seeds,
    )
    reporting.write_json(out / "stability.json", report.to_dict())
    reporting.write_stability_csv(out / "stability.csv", report)
    print(f"runs={report.n_runs} "
          f"A={report.mean('a')!r} +- {report.std('a')!r}")
    return 0


def cmd_report_freq(args) -> int:
    summaries = [reporting.read_json(p) for p in args.summaries]
    counts = reporting.selection_frequency(summaries)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reporting.render_frequency_csv(out / "selection_frequency.csv", counts)
    for algo in ("MLP", "LSTM", "CNN"):
        print(f"{algo}: {counts.get(algo, 0)}")
    return 0


def cmd_report_compare(args) -> int:
    base = reporting.load_report_sda(reporting.read_json(args.base))
    other = reporting.load_report_sda(reporting.read_json(args.other))
    rows = reporting.comparison_rows(base, other)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reporting.render_comparison_csv(out / "comparison.csv", rows)
    # Positive pct_delta means `other` improves on `base`.
    for label, b, o, delta in rows:
        print(f"{label}: base={b!r} other={o!r} delta={delta:.2f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trendsearch",
        description="Trend prediction with automated model and hyperparameter search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment the series and write trends.csv")
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("prepare", help="write supervised instances and the fold plan")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("eval", help="walk-forward evaluation of one configuration")
    _add_common(p)
    p.add_argument("--config", required=True, help="configuration JSON (assignments)")
    p.add_argument("--budget", type=int, default=None, help="training epochs (default: ladder max)")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--save-model", default=None, help="save the last fold's trained model blob")
    p.add_argument("--load", default=None, help="evaluate a saved model blob instead of training")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="run the budgeted configuration search")
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("stability", help="re-train one configuration across seeds")
    _add_common(p)
    p.add_argument("--config", required=True, help="configuration JSON (assignments)")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--runs", type=int, default=None, help="number of runs (default 10)")
    p.add_argument("--seeds", default=None, help="comma-separated seed list override")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("report", help="render comparison tables from run artifacts")
    rsub = p.add_subparsers(dest="report_command", required=True)
    rf = rsub.add_parser("freq", help="algorithm selection frequency across runs")
    rf.add_argument("summaries", nargs="+", help="search_summary.json files")
    rf.add_argument("--out", default="out")
    rf.set_defaults(func=cmd_report_freq)
    rc = rsub.add_parser("compare", help="S/D/A comparison with % delta")
    rc.add_argument("base", help="baseline report JSON (eval or stability)")
    rc.add_argument("other", help="comparison report JSON")
    rc.add_argument("--out", default="out")
    rc.set_defaults(func=cmd_report_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrendSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
