"""Trend prediction for univariate series with automated model search.

The pipeline: segment a series into linear trends, frame next-trend
prediction as supervised learning over sliding windows, evaluate models
with walk-forward validation, and search algorithm + hyperparameters with
budgeted successive halving guided by kernel density estimates.
"""

from .engine import BudgetLadder, EngineParams, SearchResult, min_budget, run_search
from .evaluation import EvalReport, StabilityReport, rmse, run_stability, run_walkforward
from .models import AlgorithmKind, ModelPlan, build_model, predict, train
from .pipeline import (
    SyntheticSpec,
    WalkForwardPlan,
    build_instances,
    generate_synthetic,
    load_csv,
    make_walkforward_plan,
    resample,
)
from .segmentation import SegmentationParams, fit_line, segment_bottom_up
from .space import ConfigurationSpace, Configuration, default_space, load_space, sample
from .trends import InstanceSet, TimeSeries, TrendSegment, TrendSequence, slope_to_angle

__version__ = "0.1.0"

__all__ = [
    "AlgorithmKind",
    "BudgetLadder",
    "Configuration",
    "ConfigurationSpace",
    "EngineParams",
    "EvalReport",
    "InstanceSet",
    "ModelPlan",
    "SearchResult",
    "SegmentationParams",
    "StabilityReport",
    "SyntheticSpec",
    "TimeSeries",
    "TrendSegment",
    "TrendSequence",
    "WalkForwardPlan",
    "build_instances",
    "build_model",
    "default_space",
    "fit_line",
    "generate_synthetic",
    "load_csv",
    "load_space",
    "make_walkforward_plan",
    "min_budget",
    "predict",
    "resample",
    "rmse",
    "run_search",
    "run_stability",
    "run_walkforward",
    "sample",
    "segment_bottom_up",
    "slope_to_angle",
    "train",
]
