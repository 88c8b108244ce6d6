"""Run manifests: a single JSON document that pins an experiment end to end.

A resolved manifest has every default expanded, so re-running from it with
the same seed and one worker reproduces all outputs byte for byte.  The
only environment variable consulted is ``TRENDSEARCH_SEED``, used as the
default seed when neither the manifest nor the command line provides one.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from . import pipeline, segmentation, space as space_mod
from .engine import BudgetLadder, EngineParams
from .errors import DomainError
from .pipeline import SyntheticSpec, WalkForwardPlan
from .segmentation import SegmentationParams
from .trends import InstanceSet, TimeSeries, TrendSequence

__all__ = [
    "load_manifest",
    "resolve_manifest",
    "ExperimentData",
    "prepare_experiment",
    "manifest_space",
    "manifest_ladder",
    "manifest_engine_params",
]

MANIFEST_VERSION = 1
MODES = ("all", "mlp", "lstm", "cnn")

_DEFAULTS = {
    "resample": 1,
    "segmentation": {"max_error": None, "max_error_scale": 0.5, "min_duration": 2},
    "partitions": {"count": 5, "test_fraction": 0.3, "val_policy": "equal"},
    "space": None,
    "engine": {
        "n_iterations": 30,
        "top_n_percent": 30,
        "num_samples": 32,
        "random_fraction": 1.0 / 3.0,
        "min_points_in_model": None,
        "bandwidth_factor": 3.0,
        "promotion_rate": "eta",
    },
    "mode": "all",
    "workers": 1,
    "stability": {"n_runs": 10},
}


def load_manifest(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DomainError(f"no such manifest: {path}")
    except json.JSONDecodeError as exc:
        raise DomainError(f"manifest {path} is not valid JSON: {exc}")


def _default_seed() -> int:
    env = os.environ.get("TRENDSEARCH_SEED")
    return int(env) if env else 0


def resolve_manifest(doc: dict, *, seed=None, mode=None, workers=None) -> dict:
    """Expand every default; command-line overrides win over the document."""
    if doc.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise DomainError(f"unsupported manifest version {doc.get('version')!r}")
    if "dataset" not in doc:
        raise DomainError("manifest must declare a 'dataset'")
    if "ladder" not in doc:
        raise DomainError("manifest must declare a 'ladder' with a max_budget")

    out: dict = {"version": MANIFEST_VERSION, "dataset": copy.deepcopy(doc["dataset"])}
    out["ladder"] = copy.deepcopy(doc["ladder"])
    for key, default in _DEFAULTS.items():
        value = doc.get(key, default)
        if isinstance(default, dict):
            merged = dict(default)
            merged.update(value or {})
            out[key] = merged
        else:
            out[key] = value
    out["seed"] = int(seed if seed is not None else doc.get("seed", _default_seed()))
    if mode is not None:
        out["mode"] = mode
    if workers is not None:
        out["workers"] = int(workers)
    if out["mode"] not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {out['mode']!r}")
    if out["space"] is not None and not os.path.exists(out["space"]):
        raise DomainError(f"space file does not exist: {out['space']}")
    ds = out["dataset"]
    if ds.get("kind") == "csv" and not os.path.exists(ds.get("path", "")):
        raise DomainError(f"dataset csv does not exist: {ds.get('path')}")
    return out


@dataclass(frozen=True)
class ExperimentData:
    series: TimeSeries
    trends: TrendSequence
    instances: InstanceSet
    plan: WalkForwardPlan


def _load_series(manifest: dict) -> TimeSeries:
    ds = manifest["dataset"]
    kind = ds.get("kind")
    if kind == "csv":
        series = pipeline.load_csv(ds["path"], ds.get("column", 0))
    elif kind == "synthetic":
        spec = SyntheticSpec(
            n_pieces=int(ds["n_pieces"]),
            piece_duration_range=tuple(ds["piece_duration_range"]),
            slope_deg_range=tuple(ds["slope_deg_range"]),
            noise_std=float(ds.get("noise_std", 0.0)),
            seed=int(ds.get("seed", 0)),
        )
        series, _ = pipeline.generate_synthetic(spec)
    else:
        raise DomainError(f"dataset kind must be 'csv' or 'synthetic', got {kind!r}")
    factor = int(manifest.get("resample", 1))
    return pipeline.resample(series, factor) if factor > 1 else series


def segmentation_params(manifest: dict, series: TimeSeries) -> SegmentationParams:
    seg = manifest["segmentation"]
    max_error = seg.get("max_error")
    if max_error is None:
        max_error = segmentation.default_max_error(series, seg.get("max_error_scale", 0.5))
    return SegmentationParams(max_error=float(max_error),
                              min_duration=int(seg.get("min_duration", 2)))


def prepare_experiment(manifest: dict) -> ExperimentData:
    """Series -> trends -> instances -> walk-forward plan, per the manifest."""
    series = _load_series(manifest)
    trends = segmentation.segment_bottom_up(series, segmentation_params(manifest, series))
    instances = pipeline.build_instances(series, trends)
    parts = manifest["partitions"]
    plan = pipeline.make_walkforward_plan(
        len(instances),
        int(parts["count"]),
        float(parts["test_fraction"]),
        parts.get("val_policy", "equal"),
    )
    return ExperimentData(series=series, trends=trends, instances=instances, plan=plan)


def manifest_space(manifest: dict) -> space_mod.ConfigurationSpace:
    """The search space, with the algorithm pinned when mode is single."""
    path = manifest.get("space")
    space = space_mod.load_space_file(path) if path else space_mod.default_space()
    mode = manifest["mode"]
    if mode != "all":
        space = space_mod.pin(space, "algorithm", mode.upper())
    return space


def manifest_ladder(manifest: dict) -> BudgetLadder:
    """Budget ladder for the manifest's mode; per-mode max budgets allowed."""
    max_budget = manifest["ladder"]["max_budget"]
    if isinstance(max_budget, dict):
        mode = manifest["mode"]
        if mode not in max_budget:
            raise DomainError(f"ladder gives no max_budget for mode {mode!r}")
        max_budget = max_budget[mode]
    return BudgetLadder.from_max(int(max_budget))


def manifest_engine_params(manifest: dict) -> EngineParams:
    eng = manifest["engine"]
    return EngineParams(
        n_iterations=int(eng["n_iterations"]),
        top_n_percent=int(eng["top_n_percent"]),
        num_samples=int(eng["num_samples"]),
        random_fraction=float(eng["random_fraction"]),
        min_points_in_model=(None if eng["min_points_in_model"] is None
                             else int(eng["min_points_in_model"])),
        bandwidth_factor=float(eng["bandwidth_factor"]),
        promotion_rate=eng["promotion_rate"],
    )
