import math

import numpy as np
import pytest

from trendsearch import evaluation
from trendsearch.errors import DomainError
from trendsearch.evaluation import (
    EvalReport,
    FoldResult,
    StabilityReport,
    make_objective,
    mean_baseline_report,
    penalty_loss,
    rmse,
    run_stability,
    run_walkforward,
)
from trendsearch.pipeline import make_walkforward_plan
from trendsearch.space import make_config
from trendsearch.trends import InstanceSet


def simple_config(algo="MLP"):
    cfg = {"algorithm": algo, "batch_size": 16, "learning_rate": 1e-2,
           "dropout_rate": 0.0, "weight_decay": 0.0}
    if algo == "MLP":
        cfg |= {"mlp_layers": 1, "mlp_width_1": 16}
    return make_config(cfg)


def sawtooth_instances(n=80, w=8, seed=0):
    """Alternating up/down trends: next slope is -previous, duration constant.

    Learnable from the window: the window's direction determines the target.
    """
    rng = np.random.default_rng(seed)
    windows = []
    targets = []
    sign = 1.0
    for _ in range(n):
        base = rng.normal() * 0.01
        ramp = sign * np.arange(w, dtype=float)
        windows.append(base + ramp + rng.normal(0, 0.01, size=w))
        targets.append((-sign * 45.0, float(w)))
        sign = -sign
    return InstanceSet(windows=np.array(windows), targets=np.array(targets), window_size=w)


class TrackingInstanceSet(InstanceSet):
    """Records every range read along with the phase it happened in."""

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "reads", [])
        object.__setattr__(self, "phase", ["init"])

    def set_phase(self, phase):
        self.phase[0] = phase

    def window_matrix(self, start, stop):
        self.reads.append((self.phase[0], start, stop))
        return super().window_matrix(start, stop)

    def target_matrix(self, start, stop):
        self.reads.append((self.phase[0], start, stop))
        return super().target_matrix(start, stop)


class OracleRunner:
    """Perfect predictor seam: reads the true targets at prediction time."""

    def __init__(self, instances, split):
        self.instances = instances
        self.split = split

    def fit(self, config, windows, targets, budget_epochs, seed):
        return None

    def predict(self, model, windows, fold):
        lo, hi = fold.range_for(self.split)
        return self.instances.target_matrix(lo, hi).copy()


class TestRmse:
    def test_perfect(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(3.5355339059327378, abs=1e-12)

    def test_constant_offset(self):
        base = np.arange(10.0)
        assert rmse(base + 2.5, base) == pytest.approx(2.5, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            rmse([], [])


class TestEvalReport:
    def test_a_is_exact_mean(self):
        report = EvalReport(
            folds=(FoldResult(0, 1.0, 3.0), FoldResult(1, 2.0, 5.0)),
            failed_folds=(),
            split="val",
        )
        assert report.s == 1.5
        assert report.d == 4.0
        assert report.a == (report.s + report.d) / 2

    def test_serialization_fields(self):
        report = EvalReport(folds=(FoldResult(0, 1.0, 2.0),), failed_folds=(3,), split="test")
        doc = report.to_dict()
        assert set(doc) == {"split", "s", "d", "a", "failed_folds", "folds"}
        assert doc["failed_folds"] == [3]


class TestRunWalkforward:
    def test_two_partition_plan_single_fold(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 2, 0.2)
        report = run_walkforward(simple_config(), inst, plan, budget_epochs=2, seed=0)
        assert len(report.folds) == 1

    def test_oracle_runner_scores_zero(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 4, 0.3)
        for split in ("val", "test"):
            report = run_walkforward(
                simple_config(), inst, plan, budget_epochs=1, seed=0,
                split=split, runner=OracleRunner(inst, split),
            )
            assert report.s == 0.0 and report.d == 0.0 and report.a == 0.0

    def test_trained_mlp_beats_mean_baseline_on_sawtooth(self):
        inst = sawtooth_instances(n=80)
        plan = make_walkforward_plan(80, 3, 0.25)
        report = run_walkforward(simple_config(), inst, plan, budget_epochs=150, seed=1)
        baseline = mean_baseline_report(inst, plan, split="val")
        assert report.a < baseline.a

    def test_fold_results_independent_of_execution_order(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 4, 0.3)
        full = run_walkforward(simple_config(), inst, plan, budget_epochs=3, seed=5)
        # re-run each fold alone through single-fold plans built by hand
        for fold, result in zip(plan.folds, full.folds):
            alone = run_walkforward(
                simple_config(), inst,
                plan.__class__(n_instances=plan.n_instances, partitions=plan.partitions,
                               test_fraction=plan.test_fraction, folds=(fold,)),
                budget_epochs=3, seed=5,
            )
            assert alone.folds[0].slope_rmse == result.slope_rmse
            assert alone.folds[0].duration_rmse == result.duration_rmse

    def test_no_test_reads_before_prediction(self):
        inst = sawtooth_instances(n=60)
        tracked = TrackingInstanceSet(
            windows=inst.windows, targets=inst.targets, window_size=inst.window_size
        )
        plan = make_walkforward_plan(60, 4, 0.3)
        phases = {}

        def probe(event, fold_index):
            tracked.set_phase(f"{event}:{fold_index}")
            phases[fold_index] = event

        run_walkforward(simple_config(), tracked, plan, budget_epochs=2, seed=0,
                        split="test", probe=probe)
        for fold in plan.folds:
            lo, hi = fold.test
            for phase, start, stop in tracked.reads:
                event, _, idx = phase.partition(":")
                if event == "fit_start" and int(idx) == fold.index:
                    # reads during this fold's fit must not touch its test range
                    assert stop <= lo or start >= hi, (
                        f"fold {fold.index} read [{start},{stop}) during fit"
                    )

    def test_normalization_uses_train_stats_only(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 2, 0.2)
        captured = {}

        class CapturingRunner:
            def fit(self, config, windows, targets, budget_epochs, seed):
                captured["train"] = windows
                return None

            def predict(self, model, windows, fold):
                captured["eval"] = windows
                return np.zeros((windows.shape[0], 2))

        run_walkforward(simple_config(), inst, plan, budget_epochs=1, seed=0,
                        runner=CapturingRunner())
        fold = plan.folds[0]
        raw_train = inst.window_matrix(*fold.train)
        mu, sd = raw_train.mean(), raw_train.std()
        expect_eval = (inst.window_matrix(*fold.val) - mu) / sd
        assert np.allclose(captured["eval"], expect_eval)
        assert abs(captured["train"].mean()) < 1e-12  # z-scored train windows

    def test_diverged_fold_marked_failed(self):
        inst = sawtooth_instances(n=40)
        plan = make_walkforward_plan(40, 3, 0.3)

        class ExplodingRunner:
            def fit(self, config, windows, targets, budget_epochs, seed):
                from trendsearch.errors import TrainingDivergedError
                raise TrainingDivergedError(epoch=0)

            def predict(self, model, windows, fold):  # pragma: no cover
                raise AssertionError

        report = run_walkforward(simple_config(), inst, plan, budget_epochs=1, seed=0,
                                 runner=ExplodingRunner())
        assert report.n_failed == len(plan.folds)
        assert report.folds == ()


class TestObjective:
    def test_uses_validation_split_and_is_deterministic(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 3, 0.3)
        objective = make_objective(inst, plan)
        config = simple_config()
        loss1, failed1 = objective(config, 2, seed=9)
        loss2, failed2 = objective(config, 2, seed=9)
        assert loss1 == loss2 and not failed1 and not failed2
        val = run_walkforward(config, inst, plan, 2, 9, split="val")
        assert loss1 == val.a

    def test_failure_returns_penalty(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 3, 0.3)

        class FailingRunner:
            def fit(self, config, windows, targets, budget_epochs, seed):
                from trendsearch.errors import TrainingDivergedError
                raise TrainingDivergedError(epoch=0)

            def predict(self, model, windows, fold):  # pragma: no cover
                raise AssertionError

        objective = make_objective(inst, plan, runner=FailingRunner())
        loss, failed = objective(simple_config(), 2, seed=0)
        assert failed
        assert loss == pytest.approx(penalty_loss(inst, plan))
        assert math.isfinite(loss)

    def test_objective_nonnegative(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 3, 0.3)
        objective = make_objective(inst, plan)
        loss, _ = objective(simple_config(), 1, seed=3)
        assert loss >= 0.0

    def test_oracle_runner_gives_zero(self):
        inst = sawtooth_instances(n=60)
        plan = make_walkforward_plan(60, 3, 0.3)
        objective = make_objective(inst, plan, runner=OracleRunner(inst, "val"))
        assert objective(simple_config(), 1, seed=0)[0] == 0.0


class TestStability:
    def test_forced_single_seed_zero_std(self):
        inst = sawtooth_instances(n=50)
        plan = make_walkforward_plan(50, 2, 0.2)
        report = run_stability(simple_config(), inst, plan, budget_epochs=2,
                               seeds=[7] * 5)
        assert report.std("a") == 0.0
        assert report.std("s") == 0.0

    def test_hand_sample_std(self):
        # run values (1, 2, 3): mean 2, sample std 1
        reports = tuple(
            EvalReport(folds=(FoldResult(0, a, a),), failed_folds=(), split="test")
            for a in (1.0, 2.0, 3.0)
        )
        stab = StabilityReport(reports=reports, seeds=(0, 1, 2))
        assert stab.mean("a") == pytest.approx(2.0, abs=1e-12)
        assert stab.std("a") == pytest.approx(1.0, abs=1e-12)

    def test_ten_runs_carry_ten_reports(self):
        inst = sawtooth_instances(n=50)
        plan = make_walkforward_plan(50, 2, 0.2)
        report = run_stability(simple_config(), inst, plan, budget_epochs=1,
                               n_runs=10, base_seed=4)
        assert report.n_runs == 10
        assert len(report.to_dict()["runs"]) == 10

    def test_needs_two_runs(self):
        inst = sawtooth_instances(n=50)
        plan = make_walkforward_plan(50, 2, 0.2)
        with pytest.raises(DomainError):
            run_stability(simple_config(), inst, plan, budget_epochs=1, seeds=[1])


def test_penalty_is_ten_times_baseline():
    inst = sawtooth_instances(n=60)
    plan = make_walkforward_plan(60, 3, 0.3)
    assert penalty_loss(inst, plan) == pytest.approx(
        evaluation.PENALTY_FACTOR * mean_baseline_report(inst, plan, "val").a
    )
