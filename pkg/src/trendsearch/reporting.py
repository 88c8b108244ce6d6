"""Writers and table renderers for run artifacts.

All files are UTF-8; CSV is comma-separated with ``.`` decimals and LF
line endings; JSON is written with sorted keys so identical runs produce
identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .errors import DomainError
from .evaluation import EvalReport, StabilityReport

__all__ = [
    "write_json",
    "write_trends_csv",
    "write_instances_csv",
    "plan_to_dict",
    "write_stability_csv",
    "write_eval_csv",
    "selection_frequency",
    "comparison_rows",
    "render_comparison_csv",
    "render_frequency_csv",
    "load_report_sda",
    "incumbent_text",
]


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_trends_csv(path, trends) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["start_index", "duration", "slope_deg"])
        start = 0
        for seg, end in zip(trends.segments, trends.breakpoints):
            w.writerow([start, seg.duration, repr(seg.slope_deg)])
            start = end


def write_instances_csv(path, instances) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([f"x{i}" for i in range(instances.window_size)]
                   + ["target_slope_deg", "target_duration"])
        for i in range(len(instances)):
            row = [repr(v) for v in instances.windows[i]]
            row += [repr(float(instances.targets[i, 0])), repr(float(instances.targets[i, 1]))]
            w.writerow(row)


def plan_to_dict(plan) -> dict:
    return {
        "n_instances": plan.n_instances,
        "partitions": plan.partitions,
        "test_fraction": plan.test_fraction,
        "folds": [
            {"index": f.index, "train": list(f.train), "val": list(f.val), "test": list(f.test)}
            for f in plan.folds
        ],
    }


def write_eval_csv(path, report: EvalReport) -> None:
    """Rows S, D, A; one column per fold plus the across-fold mean."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["metric"] + [f"fold{f.fold_index}" for f in report.folds] + ["mean"])
        w.writerow(["S"] + [repr(f.slope_rmse) for f in report.folds] + [repr(report.s)])
        w.writerow(["D"] + [repr(f.duration_rmse) for f in report.folds] + [repr(report.d)])
        a_per_fold = [(f.slope_rmse + f.duration_rmse) / 2 for f in report.folds]
        w.writerow(["A"] + [repr(a) for a in a_per_fold] + [repr(report.a)])


def write_stability_csv(path, report: StabilityReport) -> None:
    """Rows S, D, A; one column per run plus mean and std columns."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["metric"] + [f"run{i}" for i in range(report.n_runs)] + ["mean", "std"])
        for label, metric in (("S", "s"), ("D", "d"), ("A", "a")):
            values = [getattr(r, metric) for r in report.reports]
            w.writerow([label] + [repr(v) for v in values]
                       + [repr(report.mean(metric)), repr(report.std(metric))])


def selection_frequency(summaries: list[dict]) -> dict[str, int]:
    """How often each algorithm was selected as the incumbent."""
    counts: dict[str, int] = {}
    for doc in summaries:
        incumbent = doc.get("incumbent")
        if not incumbent or "algorithm" not in incumbent:
            raise DomainError("summary has no incumbent algorithm")
        algo = incumbent["algorithm"]
        counts[algo] = counts.get(algo, 0) + 1
    return counts


def render_frequency_csv(path, counts: dict[str, int], algorithms=("MLP", "LSTM", "CNN")) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["algorithm", "selected"])
        for algo in algorithms:
            w.writerow([algo, counts.get(algo, 0)])
        w.writerow(["total_runs", sum(counts.values())])


def load_report_sda(doc: dict) -> tuple[float, float, float]:
    """Pull (S, D, A) out of an eval or stability report document."""
    if "mean" in doc:
        m = doc["mean"]
        return float(m["s"]), float(m["d"]), float(m["a"])
    if all(k in doc for k in ("s", "d", "a")):
        return float(doc["s"]), float(doc["d"]), float(doc["a"])
    raise DomainError("report document carries neither mean{s,d,a} nor s/d/a fields")


def comparison_rows(base_sda, other_sda) -> list[tuple[str, float, float, float]]:
    """S/D/A rows with % delta = (base - other) / base * 100.

    Positive delta means the other run improved on the base.
    """
    rows = []
    for label, b, o in zip(("S", "D", "A"), base_sda, other_sda):
        delta = (b - o) / b * 100.0 if b != 0 else 0.0
        rows.append((label, b, o, delta))
    return rows


def render_comparison_csv(path, rows, base_name="base", other_name="other") -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["metric", base_name, other_name, "pct_delta"])
        for label, b, o, delta in rows:
            w.writerow([label, repr(b), repr(o), repr(round(delta, 2))])


def incumbent_text(result, mode: str, seed: int) -> str:
    lines = [
        f"mode: {mode}",
        f"seed: {seed}",
        f"budget ladder: {result.ladder.levels}",
        f"incumbent loss (validation A): {result.incumbent_loss!r}",
        "incumbent configuration:",
    ]
    if result.incumbent is None:
        lines.append("  (none)")
    else:
        lines.append(f"  id: {result.incumbent.id}")
        for name in sorted(result.incumbent.assignments):
            lines.append(f"  {name}: {result.incumbent.assignments[name]!r}")
    acc = result.accounting
    lines += [
        "accounting:",
        f"  unique configurations: {acc['unique_configs']}",
        f"  total evaluations: {acc['total_evaluations']}",
        f"  full-budget equivalents: {acc['full_budget_equivalents']!r}",
    ]
    return "\n".join(lines) + "\n"


def read_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise DomainError(f"no such file: {p}")
    with p.open() as fh:
        return json.load(fh)
