"""Core domain types: time series, linear trends, and supervised instances.

A trend summarises a run of consecutive points as (slope angle in degrees,
duration in points).  A trend sequence partitions a series into such runs;
supervised instances pair a window of raw points with the next trend.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "TimeSeries",
    "TrendSegment",
    "TrendSequence",
    "TrendInstance",
    "InstanceSet",
    "slope_to_angle",
]


def slope_to_angle(m: float) -> float:
    """Convert a regression coefficient (value units per index step) to degrees.

    The result lies strictly inside (-90, 90); the mapping is odd and
    strictly increasing in ``m``.
    """
    if not math.isfinite(m):
        raise DomainError(f"slope must be finite, got {m!r}")
    angle = math.degrees(math.atan(m))
    # atan saturates in float64 around |m| ~ 5e15; keep the interval open.
    if angle >= 90.0:
        return math.nextafter(90.0, 0.0)
    if angle <= -90.0:
        return math.nextafter(-90.0, 0.0)
    return angle


@dataclass(frozen=True)
class TimeSeries:
    """A univariate series sampled at unit index spacing."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DomainError(f"series must be 1-d, got shape {values.shape}")
        if values.size < 2:
            raise DomainError(f"series needs at least 2 points, got {values.size}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DomainError(f"series contains a non-finite value at index {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def variance(self) -> float:
        return float(np.var(self.values))


@dataclass(frozen=True)
class TrendSegment:
    """One linear trend: slope as an angle in degrees and a point count."""

    slope_deg: float
    duration: int

    def __post_init__(self):
        if not math.isfinite(self.slope_deg) or not (-90.0 < self.slope_deg < 90.0):
            raise DomainError(f"slope_deg must lie in (-90, 90), got {self.slope_deg!r}")
        if self.duration < 2:
            raise DomainError(f"duration must be >= 2, got {self.duration}")


@dataclass(frozen=True)
class TrendSequence:
    """Consecutive trends partitioning a source series.

    ``breakpoints[k]`` is the exclusive end index of segment ``k`` in the
    source series (the point at a boundary belongs to the left segment), so
    the last breakpoint equals the series length and durations are the
    first differences of ``[0, *breakpoints]``.
    """

    segments: tuple[TrendSegment, ...]
    breakpoints: tuple[int, ...]

    def __post_init__(self):
        segments = tuple(self.segments)
        breakpoints = tuple(int(b) for b in self.breakpoints)
        if len(segments) != len(breakpoints):
            raise DomainError(
                f"{len(segments)} segments but {len(breakpoints)} breakpoints"
            )
        if any(b <= a for a, b in zip(breakpoints, breakpoints[1:])):
            raise DomainError("breakpoints must be strictly increasing")
        prev = 0
        for seg, end in zip(segments, breakpoints):
            if end - prev != seg.duration:
                raise DomainError(
                    f"segment ending at {end} spans {end - prev} points "
                    f"but records duration {seg.duration}"
                )
            prev = end
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "breakpoints", breakpoints)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def total_duration(self) -> int:
        return self.breakpoints[-1] if self.breakpoints else 0

    def durations(self) -> np.ndarray:
        return np.diff(np.concatenate(([0], self.breakpoints)))

    def slopes_deg(self) -> np.ndarray:
        return np.array([s.slope_deg for s in self.segments])


@dataclass(frozen=True)
class TrendInstance:
    """A supervised example: ``window`` of raw points, next trend as target."""

    window: np.ndarray
    target_slope_deg: float
    target_duration: float

    def __post_init__(self):
        window = np.asarray(self.window, dtype=float)
        if not np.all(np.isfinite(window)):
            raise DomainError("instance window contains non-finite values")
        if not (math.isfinite(self.target_slope_deg) and math.isfinite(self.target_duration)):
            raise DomainError("instance target must be finite")
        window.setflags(write=False)
        object.__setattr__(self, "window", window)


@dataclass(frozen=True)
class InstanceSet:
    """Chronologically ordered instances with a common window size.

    Windows are stored as an ``(n, w)`` matrix and targets as an ``(n, 2)``
    matrix with columns (slope_deg, duration); rows are in source-time order.
    """

    windows: np.ndarray
    targets: np.ndarray
    window_size: int
    source_indices: tuple[int, ...] = field(default=())

    def __post_init__(self):
        windows = np.asarray(self.windows, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if windows.ndim != 2 or windows.shape[1] != self.window_size:
            raise DomainError(
                f"windows must have shape (n, {self.window_size}), got {windows.shape}"
            )
        if targets.shape != (windows.shape[0], 2):
            raise DomainError(f"targets must have shape (n, 2), got {targets.shape}")
        if not (np.all(np.isfinite(windows)) and np.all(np.isfinite(targets))):
            raise DomainError("instances contain non-finite values")
        windows.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return int(self.windows.shape[0])

    def __getitem__(self, i: int) -> TrendInstance:
        return TrendInstance(
            window=self.windows[i],
            target_slope_deg=float(self.targets[i, 0]),
            target_duration=float(self.targets[i, 1]),
        )

    def window_matrix(self, start: int, stop: int) -> np.ndarray:
        """Windows for instances ``start..stop`` (exclusive stop)."""
        return self.windows[start:stop]

    def target_matrix(self, start: int, stop: int) -> np.ndarray:
        """Targets for instances ``start..stop`` (exclusive stop)."""
        return self.targets[start:stop]
