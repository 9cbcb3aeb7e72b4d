"""Compound-cycloid foot trajectories.

    x(t) = S * (t/T - sin(2 pi t/T) / (2 pi))
    z(t) = H * (1/2 - cos(2 pi t/T) / 2)

The curve starts and ends with zero horizontal velocity, which is what
makes it a low-impact stepping profile.  Segments are sampled uniformly in
t, densely enough that no chord is longer than `spacing`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry_map import Point

PERIOD = 1.0
DEFAULT_SPACING = 0.025


@dataclass(frozen=True)
class CycloidParams:
    step_length: float
    step_height: float
    period: float = PERIOD

    def __post_init__(self):
        if self.step_height < 0:
            raise ValueError(f"step height must be >= 0, got {self.step_height}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")


def _dx(S, tau):
    return S * (tau - np.sin(2 * np.pi * tau) / (2 * np.pi))


def _dz(H, tau):
    return H * (0.5 - 0.5 * np.cos(2 * np.pi * tau))


def cycloid_point(params: CycloidParams, t: float):
    if not 0.0 <= t <= params.period:
        raise ValueError(f"t={t} outside [0, {params.period}]")
    tau = t / params.period
    return float(_dx(params.step_length, tau)), float(_dz(params.step_height, tau))


@dataclass(frozen=True, eq=False)
class TrajectorySegment:
    """Sampled foot path in absolute map coordinates.

    samples has shape (n, 2) with columns (x, z); samples[0] is the origin.
    `t` holds the normalized time of each sample when the segment comes
    from a cycloid, else a chord-length parametrization.
    """

    samples: np.ndarray
    phase: str
    source: str = ""
    t: Optional[np.ndarray] = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 2 or len(s) == 0:
            raise ValueError("samples must be a non-empty (n, 2) array")
        object.__setattr__(self, "samples", s)
        if self.t is None:
            object.__setattr__(self, "t", _chord_param(s))

    @property
    def origin(self) -> Point:
        return Point(*self.samples[0])

    @property
    def end(self) -> Point:
        return Point(*self.samples[-1])

    def __len__(self):
        return len(self.samples)

    def truncated(self, n_keep: int, stop: Point) -> "TrajectorySegment":
        """First n_keep samples followed by `stop`."""
        s = np.vstack([self.samples[:n_keep], [stop.x, stop.z]])
        t = np.append(self.t[:n_keep], self.t[min(n_keep, len(self.t) - 1)])
        return TrajectorySegment(s, self.phase, self.source, t)

    def max_spacing(self) -> float:
        if len(self.samples) < 2:
            return 0.0
        return float(np.max(np.hypot(*np.diff(self.samples, axis=0).T)))


def _chord_param(s):
    if len(s) < 2:
        return np.zeros(1)
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(s, axis=0).T))])
    return cum / cum[-1] if cum[-1] > 0 else np.zeros(len(s))


def _n_intervals(S, H, span, spacing):
    # |dx/dtau| <= 2|S|, |dz/dtau| <= pi*H, so chords are <= speed * dtau
    speed = math.hypot(2 * S, math.pi * H)
    return max(1, math.ceil(speed * span / spacing))


def _segment(origin, S, H, tau0, tau1, phase, spacing, source):
    if H < 0:
        raise ValueError(f"step height must be >= 0, got {H}")
    if S == 0 and H == 0:
        return TrajectorySegment(np.array([[origin.x, origin.z]]), phase,
                                 source, np.array([tau0]))
    n = _n_intervals(S, H, tau1 - tau0, spacing)
    tau = np.linspace(tau0, tau1, n + 1)
    x = origin.x + (_dx(S, tau) - _dx(S, tau0))
    z = origin.z + (_dz(H, tau) - _dz(H, tau0))
    x[0], z[0] = origin.x, origin.z
    return TrajectorySegment(np.column_stack([x, z]), phase, source, tau)


def full_cycloid(origin: Point, S: float, H: float,
                 spacing: float = DEFAULT_SPACING, source: str = ""):
    """Whole period: ends at origin + (S, 0) with apex origin + (S/2, H)."""
    return _segment(origin, S, H, 0.0, 1.0, "full", spacing, source)


def first_half(origin: Point, S: float, H: float,
               spacing: float = DEFAULT_SPACING, source: str = ""):
    """Rising half: ends at origin + (S/2, H)."""
    return _segment(origin, S, H, 0.0, 0.5, "first_half", spacing, source)


def second_half(origin: Point, S: float, H: float,
                spacing: float = DEFAULT_SPACING, source: str = ""):
    """Descending half: ends at origin + (S/2, -H)."""
    return _segment(origin, S, H, 0.5, 1.0, "second_half", spacing, source)


def polyline(points: Sequence[Point], spacing: float = DEFAULT_SPACING,
             source: str = "", phase: str = "straight") -> TrajectorySegment:
    """Straight chords through `points`, subdivided to respect `spacing`."""
    pts = np.array([[p.x, p.z] for p in points], dtype=float)
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, math.ceil(math.hypot(*(b - a)) / spacing))
        f = np.arange(1, k + 1)[:, None] / k
        out.append(a + f * (b - a))
    return TrajectorySegment(np.vstack(out), phase, source)


def straight(a: Point, b: Point, spacing: float = DEFAULT_SPACING,
             source: str = "") -> TrajectorySegment:
    return polyline([a, b], spacing, source)


def arc_length(segment: TrajectorySegment) -> float:
    s = segment.samples
    if len(s) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(s, axis=0).T)))


def write_csv(segment: TrajectorySegment, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "z"])
        for t, (x, z) in zip(segment.t, segment.samples):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(z))])
