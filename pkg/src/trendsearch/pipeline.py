"""Data ingestion, synthetic benchmarks, instance building, and walk-forward plans."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, InvalidPlanError
from .trends import InstanceSet, TimeSeries, TrendSegment, TrendSequence, slope_to_angle

__all__ = [
    "Fold",
    "WalkForwardPlan",
    "SyntheticSpec",
    "load_csv",
    "resample",
    "generate_synthetic",
    "build_instances",
    "make_walkforward_plan",
]


@dataclass(frozen=True)
class Fold:
    """Index ranges (half-open) into an InstanceSet for one evaluation step."""

    index: int
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def range_for(self, split: str) -> tuple[int, int]:
        if split == "val":
            return self.val
        if split == "test":
            return self.test
        raise DomainError(f"split must be 'val' or 'test', got {split!r}")


@dataclass(frozen=True)
class WalkForwardPlan:
    """Successive, overlapping train/validation/test partition of instances.

    The last ``floor(test_fraction * n)`` instances form the combined test
    region, split into ``partitions - 1`` consecutive blocks (earlier blocks
    take any remainder).  Fold ``i`` tests on block ``i``, validates on an
    equally sized block immediately before it, and trains on everything
    earlier, so training windows grow fold over fold.
    """

    n_instances: int
    partitions: int
    test_fraction: float
    folds: tuple[Fold, ...]

    def __len__(self) -> int:
        return len(self.folds)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a seeded piecewise-linear benchmark series."""

    n_pieces: int
    piece_duration_range: tuple[int, int]
    slope_deg_range: tuple[float, float]
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.piece_duration_range
        if self.n_pieces < 1:
            raise DomainError(f"n_pieces must be positive, got {self.n_pieces}")
        if not (2 <= lo <= hi):
            raise DomainError(f"piece durations must satisfy 2 <= lo <= hi, got {lo}, {hi}")
        slo, shi = self.slope_deg_range
        if not (-90.0 < slo <= shi < 90.0):
            raise DomainError(f"slope range must lie inside (-90, 90), got {slo}, {shi}")
        if self.noise_std < 0:
            raise DomainError(f"noise_std must be >= 0, got {self.noise_std}")


def load_csv(path, column: int | str = 0) -> TimeSeries:
    """Read one numeric column from a CSV file into a TimeSeries.

    ``column`` selects by 0-based index or by header name.  A non-numeric
    first row is treated as a header and skipped.  Parse failures report
    the 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise DomainError(f"no such file: {path}")
    values: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        col_idx: int | None = column if isinstance(column, int) else None
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if col_idx is None:
                try:
                    col_idx = row.index(column)  # header lookup by name
                    continue
                except ValueError:
                    raise DomainError(f"column {column!r} not found in header of {path}")
            if col_idx >= len(row):
                raise DomainError(f"{path}: line {lineno} has no column {col_idx}")
            cell = row[col_idx].strip()
            try:
                values.append(float(cell))
            except ValueError:
                if lineno == 1 and not values:
                    continue  # header row
                raise DomainError(f"{path}: cannot parse {cell!r} as a number on line {lineno}")
    if len(values) < 2:
        raise DomainError(f"{path}: fewer than 2 usable values")
    return TimeSeries(np.array(values))


def resample(series: TimeSeries, factor: int) -> TimeSeries:
    """Downsample by averaging blocks of ``factor`` points; the trailing
    partial block is dropped."""
    if factor < 1:
        raise DomainError(f"resample factor must be >= 1, got {factor}")
    if factor == 1:
        return series
    n = len(series) // factor
    if n < 2:
        raise DomainError(f"resampling by {factor} leaves only {n} points")
    blocks = series.values[: n * factor].reshape(n, factor)
    return TimeSeries(blocks.mean(axis=1))


def generate_synthetic(spec: SyntheticSpec) -> tuple[TimeSeries, TrendSequence]:
    """Build a piecewise-linear series plus its ground-truth trend sequence.

    Durations and slope angles are drawn uniformly from the spec ranges;
    pieces continue from the previous value so the series is continuous.
    Gaussian noise of ``noise_std`` is added after the ground truth is
    recorded, and the same seed always reproduces the same output.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.piece_duration_range
    durations = rng.integers(lo, hi, size=spec.n_pieces, endpoint=True)
    slopes_deg = rng.uniform(spec.slope_deg_range[0], spec.slope_deg_range[1], size=spec.n_pieces)

    chunks = []
    level = 0.0
    segments = []
    breakpoints = []
    total = 0
    for deg, dur in zip(slopes_deg, durations):
        m = math.tan(math.radians(deg))
        # The first piece starts at the base level; later pieces continue
        # one slope step beyond the previous piece's last value.
        offsets = np.arange(0, dur) if total == 0 else np.arange(1, dur + 1)
        piece = level + m * offsets
        chunks.append(piece)
        level = float(piece[-1])
        total += int(dur)
        segments.append(TrendSegment(slope_deg=float(deg), duration=int(dur)))
        breakpoints.append(total)

    values = np.concatenate(chunks)
    if spec.noise_std > 0:
        values = values + rng.normal(0.0, spec.noise_std, size=values.shape)
    return TimeSeries(values), TrendSequence(tuple(segments), tuple(breakpoints))


def build_instances(series: TimeSeries, trends: TrendSequence) -> InstanceSet:
    """Pair each trend's trailing window with the following trend.

    The window size ``w`` is the duration of the first trend.  For each
    consecutive segment pair, the input is the ``w`` raw points ending at
    the earlier segment's last point and the target is the later segment's
    (slope_deg, duration); pairs whose window would start before the series
    does are skipped.
    """
    if len(trends) < 2:
        raise DomainError(f"need at least 2 trends to form instances, got {len(trends)}")
    w = trends.segments[0].duration
    if w > len(series):
        raise DomainError(f"window size {w} exceeds series length {len(series)}")
    if trends.total_duration != len(series):
        raise DomainError(
            f"trends cover {trends.total_duration} points but series has {len(series)}"
        )

    windows = []
    targets = []
    ends = []
    for k in range(len(trends) - 1):
        end = trends.breakpoints[k]
        if end - w < 0:
            continue
        nxt = trends.segments[k + 1]
        windows.append(series.values[end - w : end])
        targets.append((nxt.slope_deg, float(nxt.duration)))
        ends.append(end)
    return InstanceSet(
        windows=np.array(windows),
        targets=np.array(targets),
        window_size=w,
        source_indices=tuple(ends),
    )


def make_walkforward_plan(
    n_instances: int,
    partitions: int,
    test_fraction: float,
    val_policy: str | int = "equal",
) -> WalkForwardPlan:
    """Lay out ``partitions - 1`` successive train/val/test folds.

    ``val_policy`` sizes each fold's validation block: ``"equal"`` matches
    the fold's test block, an integer fixes the size outright.
    """
    if partitions < 2:
        raise DomainError(f"partitions must be >= 2, got {partitions}")
    if not (0.0 < test_fraction < 1.0):
        raise DomainError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test_total = int(test_fraction * n_instances)
    k = partitions - 1
    if n_test_total < k:
        raise InvalidPlanError(
            f"test region of {n_test_total} instances cannot fill {k} folds"
        )
    base, extra = divmod(n_test_total, k)
    sizes = [base + 1 if i < extra else base for i in range(k)]

    folds = []
    start = n_instances - n_test_total
    for i, size in enumerate(sizes):
        test = (start, start + size)
        val_size = size if val_policy == "equal" else int(val_policy)
        val = (start - val_size, start)
        train = (0, val[0])
        for name, (a, b) in (("train", train), ("val", val), ("test", test)):
            if not (0 <= a < b <= n_instances):
                raise InvalidPlanError(f"fold {i} has an empty or out-of-range {name} range")
        folds.append(Fold(index=i, train=train, val=val, test=test))
        start += size
    return WalkForwardPlan(
        n_instances=n_instances,
        partitions=partitions,
        test_fraction=test_fraction,
        folds=tuple(folds),
    )
