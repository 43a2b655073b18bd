"""Rate-quality points, curves, Pareto fronts and resolution cross-overs.

Curves are piecewise linear in (log2 bitrate, quality).
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Q_MIN, Q_MAX = 15.0, 95.0


@dataclass(frozen=True)
class RQPoint:
    video_id: str
    width: int
    height: int
    crf: float
    bitrate: float  # kbps
    quality: float  # VMAF scale

    def __post_init__(self):
        if not (self.bitrate > 0 and math.isfinite(self.bitrate)):
            raise ValueError(f"bitrate must be positive and finite, got {self.bitrate}")
        if not (0.0 <= self.quality <= 100.0):
            raise ValueError(f"quality must lie in [0, 100], got {self.quality}")

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def log2_bitrate(self) -> float:
        return math.log2(self.bitrate)


class RQDataset:
    """Immutable collection of RQ points indexed by video and resolution."""

    def __init__(self, points: Iterable[RQPoint]):
        self.points: tuple[RQPoint, ...] = tuple(points)
        index = defaultdict(list)
        for p in self.points:
            index[(p.video_id, p.resolution)].append(p)
        self._index = {k: tuple(sorted(v, key=lambda p: (p.bitrate, p.crf))) for k, v in index.items()}

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def videos(self) -> list[str]:
        return sorted({p.video_id for p in self.points})

    def resolutions(self, video_id: str | None = None) -> list[tuple[int, int]]:
        res = {p.resolution for p in self.points if video_id is None or p.video_id == video_id}
        return sorted(res, key=lambda r: (r[0] * r[1], r))

    def for_video(self, video_id: str) -> "RQDataset":
        return RQDataset(p for p in self.points if p.video_id == video_id)

    def subset(self, video_ids: Iterable[str]) -> "RQDataset":
        keep = set(video_ids)
        return RQDataset(p for p in self.points if p.video_id in keep)

    def points_at(self, video_id: str, resolution: tuple[int, int]) -> tuple[RQPoint, ...]:
        return self._index.get((video_id, tuple(resolution)), ())

    def curve(self, video_id: str, resolution: tuple[int, int]) -> "RQCurve":
        return RQCurve.from_points(self.points_at(video_id, resolution))

    def filtered(self, q_min: float = Q_MIN, q_max: float = Q_MAX) -> "RQDataset":
        return RQDataset(filter_constraints(self.points, q_min, q_max))


def filter_constraints(points: Iterable[RQPoint], q_min: float = Q_MIN, q_max: float = Q_MAX) -> list[RQPoint]:
    """Keep points with ``q_min <= quality <= q_max``."""
    return [p for p in points if q_min <= p.quality <= q_max]


@dataclass(frozen=True)
class RQCurve:
    x: np.ndarray  # log2 bitrate, strictly increasing
    q: np.ndarray
    resolution: tuple[int, int] = (0, 0)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "q", q)
        if x.ndim != 1 or x.size != q.size or x.size == 0:
            raise ValueError("curve needs matching non-empty x and q")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("curve bitrates must be strictly increasing")

    @classmethod
    def from_points(cls, points: Sequence[RQPoint]) -> "RQCurve":
        if not points:
            raise ValueError("no points for curve")
        pts = sorted(points, key=lambda p: p.bitrate)
        res = pts[0].resolution
        return cls(np.log2([p.bitrate for p in pts]), np.array([p.quality for p in pts]), res)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    @property
    def quality_span(self) -> tuple[float, float]:
        return float(self.q.min()), float(self.q.max())

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.q) > 0))

    def quality_at(self, x):
        """Quality at log2 bitrate ``x``; no extrapolation."""
        xa = np.asarray(x, dtype=np.float64)
        if np.any(xa < self.x[0]) or np.any(xa > self.x[-1]):
            raise ValueError(f"log2 bitrate outside curve span {self.span}")
        out = np.interp(xa, self.x, self.q)
        return float(out) if out.ndim == 0 else out

    def log2_bitrate_at(self, q):
        """Inverse interpolation; defined only for strictly increasing curves."""
        if not self.is_monotone():
            raise ValueError("inverse interpolation needs a strictly increasing curve")
        qa = np.asarray(q, dtype=np.float64)
        if np.any(qa < self.q[0]) or np.any(qa > self.q[-1]):
            raise ValueError(f"quality outside curve span {self.quality_span}")
        out = np.interp(qa, self.q, self.x)
        return float(out) if out.ndim == 0 else out

    def inverse(self) -> "RQCurve":
        """The curve with axes swapped (quality -> log2 bitrate)."""
        if not self.is_monotone():
            raise ValueError("inverse needs a strictly increasing curve")
        return RQCurve(self.q, self.x, self.resolution)


def interpolate(curve: RQCurve, x):
    return curve.quality_at(x)


def pareto_front(points: Iterable[RQPoint]) -> list[RQPoint]:
    """Non-dominated points sorted by bitrate.

    A point is dominated by another with lower-or-equal bitrate and
    higher-or-equal quality, one of them strictly. Exact (bitrate, quality)
    ties keep the points with the fewest pixels; exact duplicates all stay.
    """
    pts = list(points)
    if not pts:
        raise ValueError("pareto front of an empty set")
    pts.sort(key=lambda p: (p.bitrate, -p.quality, p.pixels, p.height, p.crf))
    front, best = [], -math.inf
    for p in pts:
        if p.quality > best:
            front.append(p)
            best = p.quality
        elif front and (p.bitrate, p.quality, p.pixels) == (front[-1].bitrate, front[-1].quality, front[-1].pixels):
            front.append(p)
    return front


def _last_overtake(grid: np.ndarray, diff: np.ndarray) -> float | None:
    """Smallest grid position after which ``diff`` stays non-negative.

    ``diff`` is linear between consecutive grid knots. Returns None when the
    final value is negative.
    """
    if diff[-1] < 0:
        return None
    neg = np.flatnonzero(diff < 0)
    if neg.size == 0:
        return float(grid[0])
    i = neg[-1]
    x0, x1, d0, d1 = grid[i], grid[i + 1], diff[i], diff[i + 1]
    return float(x0 + (x1 - x0) * (-d0) / (d1 - d0))


def _overlap_grid(a: RQCurve, b: RQCurve) -> np.ndarray:
    lo, hi = max(a.x[0], b.x[0]), min(a.x[-1], b.x[-1])
    if not hi > lo:
        raise ValueError("curves do not overlap")
    inner = np.concatenate([a.x, b.x])
    return np.unique(np.concatenate([[lo, hi], inner[(inner > lo) & (inner < hi)]]))


def crossover_log2_bitrate(lower: RQCurve, higher: RQCurve) -> float | None:
    grid = _overlap_grid(lower, higher)
    return _last_overtake(grid, np.interp(grid, higher.x, higher.q) - np.interp(grid, lower.x, lower.q))


def crossover_bitrate(lower: RQCurve, higher: RQCurve) -> float | None:
    """Bitrate (kbps) above which the higher resolution keeps at least the lower's quality.

    None means the higher resolution never overtakes inside the overlap.
    Raises ValueError when the bitrate spans do not overlap.
    """
    x = crossover_log2_bitrate(lower, higher)
    return None if x is None else 2.0 ** x


def crossover_quality(lower: RQCurve, higher: RQCurve) -> float | None:
    """Quality above which the higher resolution needs no more bitrate than the lower.

    Disjoint quality spans give None, like a higher resolution that never overtakes.
    """
    lo_inv, hi_inv = lower.inverse(), higher.inverse()
    if not min(lo_inv.x[-1], hi_inv.x[-1]) > max(lo_inv.x[0], hi_inv.x[0]):
        return None
    grid = _overlap_grid(lo_inv, hi_inv)
    diff = np.interp(grid, lo_inv.x, lo_inv.q) - np.interp(grid, hi_inv.x, hi_inv.q)
    return _last_overtake(grid, diff)


@dataclass(frozen=True)
class MonotonicityResult:
    passed: bool
    first_violation: int | None = None

    def __bool__(self):
        return self.passed


def check_monotonic(x: Sequence[float], y: Sequence[float], eps: float = 0.0) -> MonotonicityResult:
    """Non-decreasing check: every y must be within ``eps`` of the running maximum."""
    xa, ya = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if xa.size != ya.size:
        raise ValueError("x and y lengths differ")
    if xa.size > 1 and not np.all(np.diff(xa) > 0):
        raise ValueError("x must be strictly increasing")
    running = -math.inf
    for i, v in enumerate(ya):
        if v < running - eps:
            return MonotonicityResult(False, i)
        running = max(running, v)
    return MonotonicityResult(True, None)
