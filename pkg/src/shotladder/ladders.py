"""Bitrate and quality ladders: construction, correction, reference ladders and hulls."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rq import RQPoint
from .vector import FeatureVector

BITRATE = "bitrate-ladder"
QUALITY = "quality-ladder"

DEFAULT_RESOLUTIONS = ((3840, 2160), (2560, 1440), (1920, 1080), (1280, 720), (960, 540), (768, 432))
DEFAULT_BITRATE_STEPS = (500, 1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000, 10500, 12000, 15000)
DEFAULT_QUALITY_STEPS = (25, 35, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90, 92.5)

QUALITY_MODEL_META = ("log2_bitrate", "width_norm", "height_norm")
BITRATE_MODEL_META = ("quality_norm", "width_norm", "height_norm")
NORM_WIDTH = 3840.0

Resolution = tuple[int, int]


def pixels(res: Resolution) -> int:
    return res[0] * res[1]


def res_label(res: Resolution) -> str:
    return f"{res[1]}p"


@dataclass(frozen=True)
class Ladder:
    kind: str
    steps: tuple[tuple[float, Resolution], ...]

    def __post_init__(self):
        if self.kind not in (BITRATE, QUALITY):
            raise ValueError(f"unknown ladder kind {self.kind!r}")
        steps = tuple((float(level), (int(r[0]), int(r[1]))) for level, r in self.steps)
        levels = [s[0] for s in steps]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("ladder levels must be strictly increasing")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def from_mapping(cls, kind: str, mapping) -> "Ladder":
        items = mapping.items() if hasattr(mapping, "items") else mapping
        return cls(kind, tuple(sorted(items)))

    @property
    def levels(self) -> list[float]:
        return [s[0] for s in self.steps]

    @property
    def resolutions(self) -> list[Resolution]:
        return [s[1] for s in self.steps]

    def as_dict(self) -> dict[float, Resolution]:
        return dict(self.steps)

    def is_monotone(self) -> bool:
        px = [pixels(r) for r in self.resolutions]
        return all(b >= a for a, b in zip(px, px[1:]))

    def to_json(self) -> str:
        steps = ",\n".join("  " + json.dumps({"level": lvl, "width": r[0], "height": r[1]}) for lvl, r in self.steps)
        return f'{{\n "kind": {json.dumps(self.kind)},\n "steps": [\n{steps}\n ]\n}}\n'

    @classmethod
    def from_json(cls, text: str) -> "Ladder":
        d = json.loads(text)
        if isinstance(d, list):
            d = {"kind": BITRATE, "steps": d}
        return cls(d.get("kind", BITRATE), tuple((s["level"], (s["width"], s["height"])) for s in d["steps"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "Ladder":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class LadderConfig:
    resolutions: tuple[Resolution, ...] = DEFAULT_RESOLUTIONS
    bitrate_steps: tuple[float, ...] = DEFAULT_BITRATE_STEPS
    quality_steps: tuple[float, ...] = DEFAULT_QUALITY_STEPS
    fixed_ladder: Ladder | None = None

    def __post_init__(self):
        for steps in (self.bitrate_steps, self.quality_steps):
            if any(b <= a for a, b in zip(steps, steps[1:])):
                raise ValueError("ladder steps must be strictly increasing")
        if self.fixed_ladder is not None:
            unknown = set(self.fixed_ladder.resolutions) - set(map(tuple, self.resolutions))
            if unknown:
                raise ValueError(f"fixed ladder uses resolutions outside the set: {sorted(unknown)}")

    def by_pixels(self) -> list[Resolution]:
        """Resolutions ordered from fewest to most pixels."""
        return sorted(map(tuple, self.resolutions), key=lambda r: (pixels(r), r))

    def steps_for(self, kind: str) -> tuple[float, ...]:
        return self.bitrate_steps if kind == BITRATE else self.quality_steps


def quality_model_row(content: np.ndarray, bitrate: float, res: Resolution) -> np.ndarray:
    return np.concatenate([content, [math.log2(bitrate), res[0] / NORM_WIDTH, res[1] / NORM_WIDTH]])


def bitrate_model_row(content: np.ndarray, quality: float, res: Resolution) -> np.ndarray:
    return np.concatenate([content, [quality / 100.0, res[0] / NORM_WIDTH, res[1] / NORM_WIDTH]])


def _check_names(model, content: FeatureVector | None, meta: Sequence[str]) -> None:
    expected = (tuple(content.names) if content is not None else ()) + tuple(meta)
    if tuple(model.feature_names) != expected:
        raise ValueError("model feature names do not match content features + metadata")


def _pick(scores: np.ndarray, res_order: list[Resolution], best: str) -> Resolution:
    """argmax/argmin over resolutions ordered by pixels; the first (fewest pixels) wins ties."""
    target = scores.max() if best == "max" else scores.min()
    return res_order[int(np.flatnonzero(scores == target)[0])]


def build_bitrate_ladder(quality_model, content: FeatureVector | None, config: LadderConfig = LadderConfig()) -> Ladder:
    """Pick, at every bitrate step, the resolution with the highest predicted quality.

    ``quality_model`` is anything with ``feature_names`` and ``predict(X)``
    returning quality / 100.
    """
    _check_names(quality_model, content, QUALITY_MODEL_META)
    res = config.by_pixels()
    rows = [quality_model_row(content.resolve(bitrate=b) if content is not None else np.empty(0), b, r)
            for b in config.bitrate_steps for r in res]
    pred = np.clip(np.asarray(quality_model.predict(np.array(rows)), dtype=np.float64), 0.0, 1.0)
    pred = pred.reshape(len(config.bitrate_steps), len(res))
    return Ladder(BITRATE, tuple((b, _pick(pred[i], res, "max")) for i, b in enumerate(config.bitrate_steps)))


def build_quality_ladder(bitrate_model, content: FeatureVector | None, config: LadderConfig = LadderConfig()) -> Ladder:
    """Pick, at every quality step, the resolution with the lowest predicted log2 bitrate."""
    _check_names(bitrate_model, content, BITRATE_MODEL_META)
    res = config.by_pixels()
    rows = [bitrate_model_row(content.resolve(quality=q) if content is not None else np.empty(0), q, r)
            for q in config.quality_steps for r in res]
    pred = np.asarray(bitrate_model.predict(np.array(rows)), dtype=np.float64)
    pred = pred.reshape(len(config.quality_steps), len(res))
    return Ladder(QUALITY, tuple((q, _pick(pred[i], res, "min")) for i, q in enumerate(config.quality_steps)))


@dataclass
class CrossoverLadder:
    ladder: Ladder
    reordered: bool = False
    thresholds: list[float] = field(default_factory=list)


def ladder_from_crossovers(crossovers: Sequence[float | None], config: LadderConfig = LadderConfig(),
                           kind: str = BITRATE) -> CrossoverLadder:
    """Ladder from one threshold per adjacent resolution pair.

    ``crossovers[i]`` belongs to the pair (i-th highest, (i+1)-th highest
    resolution): above it the higher resolution of the pair is preferred. A
    missing cross-over (None) means the higher resolution of that pair never
    takes over. Thresholds that decrease towards higher resolutions are
    raised to a running maximum and the result is flagged ``reordered``.
    """
    res_high_to_low = config.by_pixels()[::-1]
    if len(crossovers) != len(res_high_to_low) - 1:
        raise ValueError(f"expected {len(res_high_to_low) - 1} cross-overs, got {len(crossovers)}")
    # threshold per resolution, ordered low -> high; the lowest is always available
    raw = [math.inf if c is None else float(c) for c in crossovers][::-1]
    thresholds, reordered, running = [-math.inf], False, -math.inf
    for t in raw:
        if t < running:
            reordered = True
        running = max(running, t)
        thresholds.append(running)
    res_low_to_high = res_high_to_low[::-1]
    steps = []
    for level in config.steps_for(kind):
        chosen = res_low_to_high[0]
        for r, t in zip(res_low_to_high, thresholds):
            if t <= level:
                chosen = r
        steps.append((level, chosen))
    return CrossoverLadder(Ladder(kind, tuple(steps)), reordered, thresholds[1:])


def correct_top_to_bottom(ladder: Ladder) -> Ladder:
    """From the highest bitrate down, cap each resolution at the one above it."""
    if ladder.kind != BITRATE:
        raise ValueError("top-to-bottom correction applies to bitrate ladders")
    out, cap = [], None
    for level, r in reversed(ladder.steps):
        if cap is not None and pixels(r) > pixels(cap):
            r = cap
        out.append((level, r))
        cap = r
    return Ladder(BITRATE, tuple(reversed(out)))


def correct_bottom_to_top(ladder: Ladder) -> Ladder:
    """From the lowest quality up, floor each resolution at the one below it."""
    if ladder.kind != QUALITY:
        raise ValueError("bottom-to-top correction applies to quality ladders")
    out, floor = [], None
    for level, r in ladder.steps:
        if floor is not None and pixels(r) < pixels(floor):
            r = floor
        out.append((level, r))
        floor = r
    return Ladder(QUALITY, tuple(out))


def correct(ladder: Ladder) -> Ladder:
    return correct_top_to_bottom(ladder) if ladder.kind == BITRATE else correct_bottom_to_top(ladder)


def reference_ladder(front: Sequence[RQPoint], config: LadderConfig = LadderConfig(), kind: str = BITRATE) -> Ladder:
    """Sample a Pareto front at the configured steps.

    Bitrate steps take the best-quality front point at or below the step;
    quality steps take the cheapest front point reaching the step. Steps the
    front cannot serve are dropped.
    """
    front = sorted(front, key=lambda p: p.bitrate)
    if not front:
        raise ValueError("empty Pareto front")
    steps = []
    for level in config.steps_for(kind):
        if kind == BITRATE:
            below = [p for p in front if p.bitrate <= level]
            if below:
                steps.append((level, below[-1].resolution))
        else:
            above = [p for p in front if p.quality >= level]
            if above:
                steps.append((level, above[0].resolution))
    if not steps:
        raise ValueError("Pareto front does not overlap the ladder steps")
    return Ladder(kind, tuple(steps))


def ladder_to_hull(ladder: Ladder, points: Iterable[RQPoint]) -> list[RQPoint]:
    """Encodes of one video that a ladder would serve, sorted by bitrate.

    Step i at resolution R_i contributes every point at R_i whose bitrate
    (quality, for quality ladders) lies in ``[level_i, level_{i+1})``; the
    last step is open above.
    """
    pts = list(points)
    available = {p.resolution for p in pts}
    axis = (lambda p: p.bitrate) if ladder.kind == BITRATE else (lambda p: p.quality)
    hull = []
    levels = ladder.levels + [math.inf]
    for i, (level, r) in enumerate(ladder.steps):
        if r not in available:
            raise ValueError(f"resolution {r[0]}x{r[1]} missing from dataset")
        hull += [p for p in pts if p.resolution == r and level <= axis(p) < levels[i + 1]]
    return sorted(hull, key=lambda p: (p.bitrate, p.quality))
