"""Bottom-up piecewise linear approximation by least squares.

The series starts as a run of finest segments (``min_duration`` points
each), and the adjacent pair whose merged least-squares fit has the lowest
SSE is merged repeatedly while that SSE stays within ``max_error``.  Ties
go to the leftmost pair, so results are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .trends import TimeSeries, TrendSegment, TrendSequence, slope_to_angle

__all__ = [
    "LineFit",
    "SegmentationParams",
    "fit_line",
    "merge_cost",
    "segment_bottom_up",
    "default_max_error",
]


@dataclass(frozen=True)
class LineFit:
    """Ordinary least-squares line with its sum of squared residuals."""

    slope_m: float
    intercept: float
    sse: float


@dataclass(frozen=True)
class SegmentationParams:
    max_error: float
    min_duration: int = 2

    def __post_init__(self):
        if not self.max_error > 0:
            raise DomainError(f"max_error must be positive, got {self.max_error!r}")
        if self.min_duration < 2:
            raise DomainError(f"min_duration must be >= 2, got {self.min_duration}")


def fit_line(x, y) -> LineFit:
    """Least-squares line through ``(x, y)`` points.

    Indices are centered before solving so long series at large offsets do
    not lose precision to cancellation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError(f"x and y must be equal-length 1-d, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DomainError(f"need at least 2 points to fit a line, got {x.size}")
    if np.unique(x).size != x.size:
        raise DomainError("indices must be distinct")
    xm = x.mean()
    ym = y.mean()
    xc = x - xm
    sxx = float(xc @ xc)
    sxy = float(xc @ (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    sse = float(resid @ resid)
    return LineFit(slope_m=slope, intercept=intercept, sse=max(sse, 0.0))


def _range_fit(values: np.ndarray, start: int, stop: int) -> LineFit:
    return fit_line(np.arange(start, stop, dtype=float), values[start:stop])


def merge_cost(left: tuple[int, int], right: tuple[int, int], series: TimeSeries) -> float:
    """SSE of the best-fit line over two adjacent index ranges combined."""
    (a, b), (c, d) = left, right
    if b != c:
        raise DomainError(f"ranges {left} and {right} are not adjacent")
    if not (0 <= a < b < d <= len(series)):
        raise DomainError(f"ranges {left}, {right} fall outside the series")
    return _range_fit(series.values, a, d).sse


def default_max_error(series: TimeSeries, scale: float = 0.5) -> float:
    """Per-series SSE ceiling: ``scale`` times the series variance.

    The variance of a constant series is 0, which is not a usable ceiling;
    a tiny floor keeps segmentation defined there.
    """
    return max(scale * series.variance(), 1e-12)


def segment_bottom_up(series: TimeSeries, params: SegmentationParams) -> TrendSequence:
    """Segment ``series`` into trends by greedy bottom-up merging.

    Starts from consecutive blocks of ``min_duration`` points (the last
    block absorbs any remainder), then merges the cheapest adjacent pair
    while its merged SSE is at most ``max_error``.  Emitted segments carry
    the fitted slope converted to degrees and their point count.
    """
    n = len(series)
    step = params.min_duration
    if n < 2 * step:
        raise DomainError(f"series of length {n} is too short for min_duration {step}")

    # Boundaries of the finest segments; the tail block may hold up to
    # 2*min_duration - 1 points so no block falls below min_duration.
    bounds = list(range(0, n, step))
    if n - bounds[-1] < step:
        bounds.pop()
    bounds.append(n)

    values = series.values

    def cost(i: int) -> float:
        return _range_fit(values, bounds[i], bounds[i + 2]).sse

    costs = [cost(i) for i in range(len(bounds) - 2)]
    while costs:
        best = int(np.argmin(costs))  # argmin returns the first minimum: leftmost tie-break
        if not costs[best] <= params.max_error:
            break
        del bounds[best + 1]
        del costs[best]
        if best > 0:
            costs[best - 1] = cost(best - 1)
        if best < len(costs):
            costs[best] = cost(best)

    segments = []
    prev = 0
    for end in bounds[1:]:
        fit = _range_fit(values, prev, end)
        segments.append(TrendSegment(slope_deg=slope_to_angle(fit.slope_m), duration=end - prev))
        prev = end
    return TrendSequence(segments=tuple(segments), breakpoints=tuple(bounds[1:]))
