"""Bjontegaard delta rate / quality and closeness fractions.

Both curves are fitted with a least-squares cubic and the fits are integrated
exactly over the overlapping interval. Bitrates enter as log2(kbps).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .rq import RQPoint

CLOSENESS_THRESHOLDS = (0.25, 0.5, 0.75)


class BdError(ValueError):
    pass


def _as_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    """(log2 bitrate, quality) arrays from RQPoints or (bitrate, quality) pairs."""
    pts = list(points)
    if pts and isinstance(pts[0], RQPoint):
        b = np.array([p.bitrate for p in pts], dtype=np.float64)
        q = np.array([p.quality for p in pts], dtype=np.float64)
    else:
        arr = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        b, q = arr[:, 0], arr[:, 1]
    if np.any(b <= 0):
        raise BdError("bitrates must be positive")
    return np.log2(b), q


def cubic_fit(x: np.ndarray, y: np.ndarray) -> np.poly1d:
    return np.poly1d(np.polyfit(x, y, 3))


def _mean_gap(x_t, y_t, x_a, y_a, fit: Callable) -> tuple[float, tuple[float, float], bool]:
    """Mean of fit_t - fit_a over the overlap of the x spans; also reports fit monotonicity."""
    for x in (x_t, x_a):
        if np.unique(x).size < 4:
            raise BdError("need at least 4 points with distinct abscissae")
    lo, hi = max(x_t.min(), x_a.min()), min(x_t.max(), x_a.max())
    if not hi > lo:
        raise BdError("curves do not overlap")
    p_t, p_a = fit(x_t, y_t), fit(x_a, y_a)
    diff = np.polyint(p_t - p_a)
    gap = (diff(hi) - diff(lo)) / (hi - lo)
    monotone = all(_monotone_on(p, lo, hi) for p in (p_t, p_a))
    return float(gap), (float(lo), float(hi)), monotone


def _monotone_on(p: np.poly1d, lo: float, hi: float) -> bool:
    d = p.deriv()
    probe = np.linspace(lo, hi, 65)
    vals = d(probe)
    return bool(np.all(vals >= 0) or np.all(vals <= 0))


@dataclass(frozen=True)
class BdResult:
    bd_rate: float       # percent; negative means the test set needs less bitrate
    bd_quality: float    # quality delta; positive means the test set is better
    quality_overlap: tuple[float, float]
    log2_rate_overlap: tuple[float, float]
    monotone_fit: bool = True


def bd_rate(test, anchor, fit: Callable = cubic_fit) -> float:
    """Average bitrate difference of ``test`` against ``anchor`` at equal quality, in percent."""
    return bd_rate_detail(test, anchor, fit)[0]


def bd_rate_detail(test, anchor, fit: Callable = cubic_fit):
    x_t, q_t = _as_arrays(test)
    x_a, q_a = _as_arrays(anchor)
    gap, span, mono = _mean_gap(q_t, x_t, q_a, x_a, fit)
    return 100.0 * (2.0 ** gap - 1.0), span, mono


def bd_quality(test, anchor, fit: Callable = cubic_fit) -> float:
    """Average quality difference of ``test`` against ``anchor`` at equal bitrate."""
    return bd_quality_detail(test, anchor, fit)[0]


def bd_quality_detail(test, anchor, fit: Callable = cubic_fit):
    x_t, q_t = _as_arrays(test)
    x_a, q_a = _as_arrays(anchor)
    return _mean_gap(x_t, q_t, x_a, q_a, fit)


def bd_metrics(test, anchor, fit: Callable = cubic_fit) -> BdResult:
    rate, q_span, m1 = bd_rate_detail(test, anchor, fit)
    qual, r_span, m2 = bd_quality_detail(test, anchor, fit)
    return BdResult(rate, qual, q_span, r_span, m1 and m2)


@dataclass(frozen=True)
class Closeness:
    f25: float
    f50: float
    f75: float
    n: int = 0

    def as_dict(self) -> dict:
        return {"f25": self.f25, "f50": self.f50, "f75": self.f75}


def closeness(method: Mapping[str, tuple[float, float]], reference: Mapping[str, tuple[float, float]],
              thresholds: Sequence[float] = CLOSENESS_THRESHOLDS) -> Closeness:
    """Fraction of videos whose method gains reach t x the reference gains.

    Both mappings are ``video_id -> (bd_rate %, bd_quality)`` measured against
    the same fixed ladder. A video counts for threshold t when
    ``-rate_m >= t * -rate_ref`` and ``qual_m >= t * qual_ref``.
    """
    if set(method) != set(reference):
        raise ValueError("method and reference cover different videos")
    if not method:
        raise ValueError("no videos to compare")
    fr = {}
    for t in thresholds:
        hits = sum(1 for v in method
                   if -method[v][0] >= t * -reference[v][0] and method[v][1] >= t * reference[v][1])
        fr[t] = hits / len(method)
    return Closeness(fr.get(0.25, math.nan), fr.get(0.5, math.nan), fr.get(0.75, math.nan), len(method))


@dataclass
class BdReportRow:
    video_id: str
    vs_fixed: BdResult | None
    vs_reference: BdResult | None
    note: str = ""


@dataclass
class BdReport:
    rows: list[BdReportRow] = field(default_factory=list)

    def _column(self, attr: str, field_name: str) -> np.ndarray:
        vals = [getattr(getattr(r, attr), field_name) for r in self.rows if getattr(r, attr) is not None]
        return np.asarray(vals, dtype=np.float64)

    def summary(self) -> dict[str, tuple[float, float]]:
        out = {}
        for attr in ("vs_fixed", "vs_reference"):
            for name in ("bd_rate", "bd_quality"):
                col = self._column(attr, name)
                out[f"{attr}.{name}"] = (float(col.mean()), float(col.std())) if col.size else (math.nan, math.nan)
        return out

    def write_csv(self, path, closeness_result: Closeness | None = None) -> None:
        cols = ["video_id", "bd_rate_vs_fixed", "bd_vmaf_vs_fixed", "bd_rate_vs_reference",
                "bd_vmaf_vs_reference", "note"]

        def fmt(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r.video_id,
                            fmt(r.vs_fixed.bd_rate if r.vs_fixed else None),
                            fmt(r.vs_fixed.bd_quality if r.vs_fixed else None),
                            fmt(r.vs_reference.bd_rate if r.vs_reference else None),
                            fmt(r.vs_reference.bd_quality if r.vs_reference else None), r.note])
            s = self.summary()
            for i, stat in enumerate(("mean", "std")):
                w.writerow([stat] + [fmt(s[k][i]) for k in ("vs_fixed.bd_rate", "vs_fixed.bd_quality",
                                                            "vs_reference.bd_rate", "vs_reference.bd_quality")] + [""])
            if closeness_result is not None:
                for k, v in closeness_result.as_dict().items():
                    w.writerow([k, fmt(v), "", "", "", ""])


def pair_map(rows: Iterable[BdReportRow], attr: str = "vs_fixed") -> dict[str, tuple[float, float]]:
    return {r.video_id: (getattr(r, attr).bd_rate, getattr(r, attr).bd_quality)
            for r in rows if getattr(r, attr) is not None}
