"""Walk-forward training/evaluation, RMSE reporting, and multi-run stability.

Per fold, input windows are z-score normalized with statistics taken from
that fold's training range only; targets stay in raw units.  The search
objective is the validation-split average of slope and duration RMSE — the
test split is reserved for final reporting, never for search feedback.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .errors import (
    DomainError,
    InfeasibleConfigError,
    NumericalError,
    TrainingDivergedError,
)
from .pipeline import Fold, WalkForwardPlan
from .space import Configuration
from .trends import InstanceSet

__all__ = [
    "FoldResult",
    "EvalReport",
    "StabilityReport",
    "NeuralFoldRunner",
    "rmse",
    "run_walkforward",
    "mean_baseline_report",
    "penalty_loss",
    "make_objective",
    "run_stability",
]

PENALTY_FACTOR = 10.0


def rmse(predictions, targets) -> float:
    """Root mean square error over two equal-length sequences."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise DomainError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise DomainError("rmse of empty input is undefined")
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass(frozen=True)
class FoldResult:
    fold_index: int
    slope_rmse: float
    duration_rmse: float


@dataclass(frozen=True)
class EvalReport:
    """Per-fold RMSEs plus their equally weighted averages.

    ``s`` and ``d`` average the successful folds; ``a`` is exactly their
    arithmetic mean.  Failed folds are listed by index only.
    """

    folds: tuple[FoldResult, ...]
    failed_folds: tuple[int, ...]
    split: str

    @property
    def n_failed(self) -> int:
        return len(self.failed_folds)

    @property
    def s(self) -> float:
        if not self.folds:
            return math.nan
        return float(np.mean([f.slope_rmse for f in self.folds]))

    @property
    def d(self) -> float:
        if not self.folds:
            return math.nan
        return float(np.mean([f.duration_rmse for f in self.folds]))

    @property
    def a(self) -> float:
        return (self.s + self.d) / 2.0

    def to_dict(self) -> dict:
        ok = bool(self.folds)
        return {
            "split": self.split,
            "s": self.s if ok else None,
            "d": self.d if ok else None,
            "a": self.a if ok else None,
            "failed_folds": list(self.failed_folds),
            "folds": [
                {
                    "fold": f.fold_index,
                    "slope_rmse": f.slope_rmse,
                    "duration_rmse": f.duration_rmse,
                }
                for f in self.folds
            ],
        }


@dataclass(frozen=True)
class StabilityReport:
    """Mean and sample standard deviation of S/D/A across independent runs."""

    reports: tuple[EvalReport, ...]
    seeds: tuple[int, ...]

    @property
    def n_runs(self) -> int:
        return len(self.reports)

    def _values(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.reports])

    def mean(self, metric: str) -> float:
        return float(np.mean(self._values(metric)))

    def std(self, metric: str) -> float:
        return float(np.std(self._values(metric), ddof=1))

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "seeds": list(self.seeds),
            "mean": {m: self.mean(m) for m in ("s", "d", "a")},
            "std": {m: self.std(m) for m in ("s", "d", "a")},
            "runs": [r.to_dict() for r in self.reports],
        }


def fold_seed(seed: int, fold_index: int) -> int:
    """Deterministic per-fold training seed derived from the run seed."""
    ss = np.random.SeedSequence([seed & (2**64 - 1), fold_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class NeuralFoldRunner:
    """Default fold runner: build the configured model and train it."""

    def fit(self, config: Configuration, windows, targets, budget_epochs: int, seed: int):
        plan = models.build_model(config, window_size=windows.shape[1])
        settings = models.settings_from_config(config, epochs=budget_epochs, seed=seed)
        return models.train(plan, windows, targets, settings)

    def predict(self, model, windows, fold: Fold):
        return models.predict(model, windows)


def _normalize(windows: np.ndarray, mu: float, sd: float) -> np.ndarray:
    return (windows - mu) / sd


def run_walkforward(
    config: Configuration,
    instances: InstanceSet,
    plan: WalkForwardPlan,
    budget_epochs: int,
    seed: int,
    split: str = "val",
    runner=None,
    probe=None,
) -> EvalReport:
    """Train and score a configuration across every fold of the plan.

    Folds are independent: each trains from scratch on its own training
    range with a seed derived from ``(seed, fold_index)`` and is scored on
    the requested split.  ``probe``, when given, is called with
    ``("fit_start" | "predict_start" | "fold_end", fold_index)`` so tests
    can audit the order of data access.  A fold whose training diverges or
    whose configuration is infeasible is recorded as failed.
    """
    if plan.n_instances != len(instances):
        raise DomainError(
            f"plan covers {plan.n_instances} instances but the set has {len(instances)}"
        )
    runner = runner or NeuralFoldRunner()
    notify = probe or (lambda event, fold_index: None)

    results: list[FoldResult] = []
    failed: list[int] = []
    for fold in plan.folds:
        notify("fit_start", fold.index)
        train_w = instances.window_matrix(*fold.train)
        train_t = instances.target_matrix(*fold.train)
        mu = float(train_w.mean())
        sd = max(float(train_w.std()), 1e-12)
        try:
            model = runner.fit(
                config, _normalize(train_w, mu, sd), train_t,
                budget_epochs, fold_seed(seed, fold.index),
            )
            notify("predict_start", fold.index)
            lo, hi = fold.range_for(split)
            preds = np.asarray(
                runner.predict(model, _normalize(instances.window_matrix(lo, hi), mu, sd), fold)
            )
            eval_t = instances.target_matrix(lo, hi)
            results.append(
                FoldResult(
                    fold_index=fold.index,
                    slope_rmse=rmse(preds[:, 0], eval_t[:, 0]),
                    duration_rmse=rmse(preds[:, 1], eval_t[:, 1]),
                )
            )
        except (TrainingDivergedError, InfeasibleConfigError, NumericalError):
            failed.append(fold.index)
        notify("fold_end", fold.index)
    return EvalReport(folds=tuple(results), failed_folds=tuple(failed), split=split)


def mean_baseline_report(instances: InstanceSet, plan: WalkForwardPlan,
                         split: str = "val") -> EvalReport:
    """Score the predict-the-training-mean baseline on every fold."""
    results = []
    for fold in plan.folds:
        train_t = instances.target_matrix(*fold.train)
        mean_pred = train_t.mean(axis=0)
        lo, hi = fold.range_for(split)
        eval_t = instances.target_matrix(lo, hi)
        results.append(
            FoldResult(
                fold_index=fold.index,
                slope_rmse=rmse(np.full(hi - lo, mean_pred[0]), eval_t[:, 0]),
                duration_rmse=rmse(np.full(hi - lo, mean_pred[1]), eval_t[:, 1]),
            )
        )
    return EvalReport(folds=tuple(results), failed_folds=(), split=split)


def penalty_loss(instances: InstanceSet, plan: WalkForwardPlan) -> float:
    """Finite worst-case loss assigned to failed evaluations."""
    return PENALTY_FACTOR * mean_baseline_report(instances, plan, split="val").a


def make_objective(instances: InstanceSet, plan: WalkForwardPlan, runner=None):
    """Build the search objective: validation-split A, penalty on failure.

    Returns a callable ``objective(config, budget_epochs, seed) ->
    (loss, failed)``; the loss is always finite.
    """
    penalty = penalty_loss(instances, plan)

    def objective(config: Configuration, budget_epochs: int, seed: int):
        report = run_walkforward(
            config, instances, plan, budget_epochs, seed, split="val", runner=runner
        )
        if report.n_failed > 0 or not report.folds:
            return penalty, True
        return report.a, False

    return objective


def run_stability(
    config: Configuration,
    instances: InstanceSet,
    plan: WalkForwardPlan,
    budget_epochs: int,
    n_runs: int = 10,
    base_seed: int = 0,
    seeds=None,
    split: str = "test",
    runner=None,
) -> StabilityReport:
    """Evaluate one configuration across independent runs differing only in seed."""
    if seeds is None:
        seeds = [base_seed + i for i in range(n_runs)]
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise DomainError(f"stability needs at least 2 runs, got {len(seeds)}")
    reports = tuple(
        run_walkforward(config, instances, plan, budget_epochs, s, split=split, runner=runner)
        for s in seeds
    )
    return StabilityReport(reports=reports, seeds=tuple(seeds))
