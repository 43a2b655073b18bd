"""Encode planning, manifest ingestion, feature store, training assembly, splits and synthetic data."""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .ladders import (BITRATE_MODEL_META, DEFAULT_RESOLUTIONS, NORM_WIDTH, QUALITY_MODEL_META,
                      Resolution, pixels)
from .media import VideoClip
from .rq import Q_MAX, Q_MIN, RQDataset, RQPoint
from .trees import TrainingMatrix
from .vector import FeatureVector

DEFAULT_CRFS = tuple(range(16, 36)) + (37, 39, 41)
MANIFEST_COLUMNS = ("video_id", "width", "height", "crf", "bitrate_kbps", "vmaf")
MANIFEST_SCHEMA_VERSION = 1


class ManifestError(ValueError):
    pass


# -- encode planning -----------------------------------------------------------

@dataclass(frozen=True)
class EncodeConfig:
    resolutions: tuple[Resolution, ...] = DEFAULT_RESOLUTIONS
    crfs: tuple[float, ...] = DEFAULT_CRFS
    encoder: str = "libx265"
    preset: str = "medium"
    output_dir: str = "encodes"


@dataclass(frozen=True)
class EncodeJob:
    video_id: str
    source: str
    width: int
    height: int
    crf: float
    encoder: str
    output: str
    encode_cmd: tuple[str, ...]
    quality_cmd: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"video_id": self.video_id, "source": self.source, "width": self.width, "height": self.height,
                "crf": self.crf, "encoder": self.encoder, "output": self.output,
                "encode_cmd": list(self.encode_cmd), "quality_cmd": list(self.quality_cmd)}


@dataclass(frozen=True)
class EncodePlan:
    jobs: tuple[EncodeJob, ...]

    def __len__(self):
        return len(self.jobs)

    def to_json(self) -> str:
        return json.dumps({"schema_version": MANIFEST_SCHEMA_VERSION, "jobs": [j.to_dict() for j in self.jobs]},
                          indent=1) + "\n"


def _crf_text(crf: float) -> str:
    return str(int(crf)) if float(crf).is_integer() else str(crf)


def plan_encodes(videos: Sequence[str | tuple[str, str]], config: EncodeConfig = EncodeConfig()) -> EncodePlan:
    """Full resolution x CRF grid for every video.

    ``videos`` holds source paths or ``(video_id, source_path)`` pairs. Each
    job names an external encoder call and an external quality measurement
    against the source (upscaled back to the source size).
    """
    if not videos:
        raise ValueError("no videos to plan")
    if not config.resolutions or not config.crfs:
        raise ValueError("empty resolution or CRF set")
    if len(set(config.resolutions)) != len(config.resolutions) or len(set(config.crfs)) != len(config.crfs):
        raise ValueError("duplicate resolutions or CRFs")
    jobs, seen = [], set()
    for v in videos:
        vid, src = (v if isinstance(v, tuple) else (Path(v).stem, str(v)))
        if vid in seen:
            raise ValueError(f"duplicate video id {vid!r}")
        seen.add(vid)
        for w, h in config.resolutions:
            for crf in config.crfs:
                out = str(Path(config.output_dir) / f"{vid}_{h}p_crf{_crf_text(crf)}.mp4")
                enc = ("ffmpeg", "-y", "-i", src, "-vf", f"scale={w}:{h}", "-c:v", config.encoder,
                       "-preset", config.preset, "-crf", _crf_text(crf), out)
                qual = ("ffmpeg", "-i", out, "-i", src, "-lavfi",
                        "[0:v][1:v]scale2ref=flags=bicubic[d][r];[d][r]libvmaf", "-f", "null", "-")
                jobs.append(EncodeJob(vid, src, int(w), int(h), crf, f"{config.encoder}-{config.preset}",
                                      out, enc, qual))
    return EncodePlan(tuple(jobs))


# -- manifests -----------------------------------------------------------------

def _parse_row(raw: Mapping[str, str], where: str) -> RQPoint:
    try:
        vid = str(raw["video_id"]).strip()
        if not vid:
            raise ManifestError(f"{where}: empty video_id")
        w, h = int(raw["width"]), int(raw["height"])
        crf, b, q = float(raw["crf"]), float(raw["bitrate_kbps"]), float(raw["vmaf"])
    except KeyError as e:
        raise ManifestError(f"{where}: missing column {e.args[0]}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, ManifestError):
            raise
        raise ManifestError(f"{where}: non-numeric field ({e})") from None
    if w <= 0 or h <= 0:
        raise ManifestError(f"{where}: width and height must be positive")
    if not (math.isfinite(crf) and math.isfinite(b) and math.isfinite(q)):
        raise ManifestError(f"{where}: non-finite value")
    try:
        return RQPoint(vid, w, h, crf, b, q)
    except ValueError as e:
        raise ManifestError(f"{where}: {e}") from None


def _build_dataset(rows: Iterable[tuple[str, Mapping]]) -> RQDataset:
    points, first_seen = [], {}
    for where, raw in rows:
        p = _parse_row(raw, where)
        key = (p.video_id, p.width, p.height, p.crf)
        if key in first_seen:
            raise ManifestError(f"duplicate (video, width, height, crf) {key} at {first_seen[key]} and {where}")
        first_seen[key] = where
        points.append(p)
    return RQDataset(points)


def parse_manifest_csv(text: str) -> RQDataset:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ManifestError("line 1: missing header")
    missing = [c for c in MANIFEST_COLUMNS if c not in [f.strip() for f in reader.fieldnames]]
    if missing:
        raise ManifestError(f"line 1: missing column(s) {', '.join(missing)}")
    reader.fieldnames = [f.strip() for f in reader.fieldnames]
    return _build_dataset((f"line {reader.line_num}", row) for row in reader)


def parse_manifest_json(text: str) -> RQDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestError(f"line {e.lineno}: invalid JSON ({e.msg})") from None
    rows = doc["rows"] if isinstance(doc, dict) else doc
    if not isinstance(rows, list):
        raise ManifestError("JSON manifest must be a list of rows or {'rows': [...]}")
    return _build_dataset((f"row {i + 1}", r) for i, r in enumerate(rows))


def ingest_manifest(path: str | Path) -> RQDataset:
    """Read a CSV or JSON manifest into a validated dataset."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return parse_manifest_json(text)
    return parse_manifest_csv(text)


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def emit_manifest(dataset: Iterable[RQPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for p in sorted(dataset, key=lambda p: (p.video_id, p.pixels, p.crf)):
        w.writerow([p.video_id, p.width, p.height, _num(p.crf), _num(p.bitrate), _num(p.quality)])
    return buf.getvalue()


def write_manifest(dataset: Iterable[RQPoint], path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        rows = [{"video_id": p.video_id, "width": p.width, "height": p.height, "crf": p.crf,
                 "bitrate_kbps": p.bitrate, "vmaf": p.quality}
                for p in sorted(dataset, key=lambda p: (p.video_id, p.pixels, p.crf))]
        path.write_text(json.dumps({"schema_version": MANIFEST_SCHEMA_VERSION, "rows": rows}, indent=1) + "\n")
    else:
        path.write_text(emit_manifest(dataset), encoding="utf-8")


# -- feature store ---------------------------------------------------------------

_SAFE = re.compile(r"[^A-Za-z0-9._+-]")


class FeatureStore:
    """One JSON file per (video, feature set) under a directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, video_id: str, feature_set: str) -> Path:
        return self.root / f"{_SAFE.sub('_', video_id)}.{_SAFE.sub('_', feature_set)}.json"

    def put(self, vec: FeatureVector) -> Path:
        if not vec.video_id:
            raise ValueError("feature vector has no video id")
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.path(vec.video_id, vec.set_id)
        vec.save(p)
        return p

    def get(self, video_id: str, feature_set: str) -> FeatureVector:
        p = self.path(video_id, feature_set)
        if not p.exists():
            raise KeyError(f"no {feature_set} features stored for {video_id}")
        return FeatureVector.load(p)

    def has(self, video_id: str, feature_set: str) -> bool:
        return self.path(video_id, feature_set).exists()


# -- training matrices -----------------------------------------------------------

QUALITY_TASK, BITRATE_TASK = "quality", "bitrate"


def metadata_row(point: RQPoint, task: str) -> tuple[list[float], float]:
    """Metadata inputs and target for one encode."""
    wn, hn = point.width / NORM_WIDTH, point.height / NORM_WIDTH
    if task == QUALITY_TASK:
        return [math.log2(point.bitrate), wn, hn], point.quality / 100.0
    if task == BITRATE_TASK:
        return [point.quality / 100.0, wn, hn], math.log2(point.bitrate)
    raise ValueError(f"unknown task {task!r}")


def assemble_training(dataset: Iterable[RQPoint], features: Mapping[str, FeatureVector] | FeatureStore | None,
                      task: str, feature_set: str | None = None) -> TrainingMatrix:
    """Rows of [content features, metadata] with the task target; groups are video ids.

    ``features`` maps video id to a vector (or is a store read with
    ``feature_set``); ``None`` trains on metadata alone.
    """
    if task not in (QUALITY_TASK, BITRATE_TASK):
        raise ValueError(f"unknown task {task!r}")
    pts = sorted(dataset, key=lambda p: (p.video_id, p.pixels, p.bitrate, p.crf))
    if not pts:
        raise ValueError("no points to assemble")
    cache: dict[str, FeatureVector] = {}

    def vec_for(vid: str) -> FeatureVector:
        if vid not in cache:
            if isinstance(features, FeatureStore):
                if feature_set is None:
                    raise ValueError("feature_set is required with a feature store")
                cache[vid] = features.get(vid, feature_set)
            elif vid in features:
                cache[vid] = features[vid]
            else:
                raise KeyError(f"missing features for video {vid!r}")
        v = cache[vid]
        if v.coupling == "bitrate" and task == BITRATE_TASK:
            raise ValueError("bitrate-coupled features cannot feed a bitrate-predicting model")
        if v.coupling == "quality" and task == QUALITY_TASK:
            raise ValueError("quality-coupled features cannot feed a quality-predicting model")
        return v

    rows, targets, groups = [], [], []
    names: tuple[str, ...] | None = None
    for p in pts:
        meta, target = metadata_row(p, task)
        if features is None:
            content, vnames = np.empty(0), ()
        else:
            v = vec_for(p.video_id)
            content = v.resolve(bitrate=p.bitrate) if task == QUALITY_TASK else v.resolve(quality=p.quality)
            vnames = v.names
        if names is None:
            names = tuple(vnames)
        elif tuple(vnames) != names:
            raise ValueError(f"feature names of video {p.video_id!r} differ from the others")
        rows.append(np.concatenate([content, meta]))
        targets.append(target)
        groups.append(p.video_id)
    meta_names = QUALITY_MODEL_META if task == QUALITY_TASK else BITRATE_MODEL_META
    target_name = "quality_norm" if task == QUALITY_TASK else "log2_bitrate"
    return TrainingMatrix(np.array(rows), np.array(targets), np.array(groups, dtype=object),
                          names + meta_names, target_name, {"task": task, "feature_set": feature_set or "none"})


# -- grouped splits --------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int = 0

    def __post_init__(self):
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split parts overlap")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train": list(self.train), "validation": list(self.validation),
                "test": list(self.test)}


def _split_sizes(n: int, parts: Sequence[float]) -> tuple[int, int, int]:
    if len(parts) != 3 or any(p < 0 for p in parts):
        raise ValueError("split needs three non-negative parts")
    if all(float(p).is_integer() for p in parts) and sum(parts) > 1.0 + 1e-9:
        sizes = tuple(int(p) for p in parts)
        if sum(sizes) > n:
            raise ValueError(f"split counts {sizes} exceed the {n} available videos")
        return sizes
    total = float(sum(parts))
    if total <= 0:
        raise ValueError("split ratios sum to zero")
    val = int(round(n * parts[1] / total))
    test = int(round(n * parts[2] / total))
    return n - val - test, val, test


def split_grouped(videos: Iterable[str] | RQDataset, parts: Sequence[float] = (0.7, 0.1, 0.2),
                  seed: int = 0) -> SplitSpec:
    """Video-level train/validation/test split from counts or ratios.

    Integer counts summing past 1 are taken literally (any remainder is left
    out); otherwise the parts are ratios and rounding slack goes to training.
    """
    ids = sorted(set(videos.videos() if isinstance(videos, RQDataset) else videos))
    n_train, n_val, n_test = _split_sizes(len(ids), parts)
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    test = order[:n_test]
    val = order[n_test:n_test + n_val]
    train = order[n_test + n_val:n_test + n_val + n_train]
    return SplitSpec(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)), seed)


def rotating_splits(videos: Iterable[str] | RQDataset, parts: Sequence[float] = (0.7, 0.1, 0.2),
                    seed: int = 0) -> list[SplitSpec]:
    """Ratio splits whose test parts tile the video set, so every video is tested once."""
    ids = sorted(set(videos.videos() if isinstance(videos, RQDataset) else videos))
    n = len(ids)
    total = float(sum(parts))
    n_test = max(1, int(round(n * parts[2] / total)))
    n_val = int(round(n * parts[1] / total))
    order = [ids[i] for i in np.random.default_rng(seed).permutation(n)]
    splits = []
    for start in range(0, n, n_test):
        test = order[start:start + n_test]
        rest = order[start + n_test:] + order[:start]
        val, train = rest[:n_val], rest[n_val:]
        splits.append(SplitSpec(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)), seed))
    return splits


# -- synthetic data --------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Parameter ranges of the synthetic rate-quality family.

    Curves are ``q = Q_r / (1 + exp(-a (x - x0_r)))`` over x = log2 kbps with
    a per-resolution ceiling ``Q_r`` and a per-video slope ``a``. Adjacent
    resolutions cross exactly once, at cross-overs placed from the video's
    latent complexity; ``x0_r`` is solved from them.
    """
    resolutions: tuple[Resolution, ...] = DEFAULT_RESOLUTIONS
    crfs: tuple[float, ...] = DEFAULT_CRFS
    ceiling_top: float = 98.0
    ceiling_step: float = 4.5
    slope_range: tuple[float, float] = (1.0, 1.7)
    first_crossover_kbps: float = 250.0
    first_crossover_spread: float = 2.5      # octaves added at complexity 1
    motion_shift: float = 0.3                # octaves added at motion 1
    gap_range: tuple[float, float] = (0.6, 1.0)
    jitter: float = 0.1                      # octaves, uniform +-
    low_half_offset: float = 0.3             # lowest curve's midpoint sits this far below its cross-over
    crf_ref: float = 28.0
    crf_halving: float = 6.0
    clip_size: int = 64
    clip_frames: int = 4

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class SynthVideo:
    video_id: str
    complexity: float
    motion: float
    slope: float
    resolutions: tuple[Resolution, ...]      # fewest pixels first
    ceilings: tuple[float, ...]
    midpoints: tuple[float, ...]             # x0 per resolution
    log2_refs: tuple[float, ...]             # log2 bitrate at the reference CRF
    crossovers: tuple[float, ...]            # log2 kbps, pair (r, r+1) low -> high

    def index(self, res: Resolution) -> int:
        return self.resolutions.index(tuple(res))

    def quality(self, res: Resolution, x):
        i = self.index(res)
        return self.ceilings[i] / (1.0 + np.exp(-self.slope * (np.asarray(x, dtype=np.float64) - self.midpoints[i])))

    def log2_bitrate(self, res: Resolution, q):
        i = self.index(res)
        q = np.asarray(q, dtype=np.float64)
        return self.midpoints[i] - np.log(self.ceilings[i] / q - 1.0) / self.slope

    def log2_span(self, res: Resolution, crfs: Sequence[float], crf_ref: float = 28.0,
                  halving: float = 6.0) -> tuple[float, float]:
        xr = self.log2_refs[self.index(res)]
        return xr - (max(crfs) - crf_ref) / halving, xr - (min(crfs) - crf_ref) / halving

    def crossover_kbps(self) -> dict[tuple[Resolution, Resolution], float]:
        return {(self.resolutions[i], self.resolutions[i + 1]): 2.0 ** x for i, x in enumerate(self.crossovers)}

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["resolutions"] = [list(r) for r in self.resolutions]
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


@dataclass
class SynthResult:
    dataset: RQDataset
    videos: dict[str, SynthVideo] = field(default_factory=dict)
    config: SynthConfig = SynthConfig()


def _synth_video(vid: str, rng: np.random.Generator, cfg: SynthConfig) -> SynthVideo:
    res = tuple(sorted(map(tuple, cfg.resolutions), key=lambda r: (pixels(r), r)))
    n = len(res)
    c, m = rng.uniform(0, 1), rng.uniform(0, 1)
    lo_a, hi_a = cfg.slope_range
    a = hi_a - (hi_a - lo_a) * c + rng.uniform(-0.05, 0.05)
    ceilings = tuple(cfg.ceiling_top - cfg.ceiling_step * (n - 1 - i) for i in range(n))
    j = cfg.jitter
    cross = [math.log2(cfg.first_crossover_kbps) + cfg.first_crossover_spread * c + cfg.motion_shift * m
             + rng.uniform(-j, j)]
    g_lo, g_hi = cfg.gap_range
    for _ in range(n - 2):
        cross.append(cross[-1] + g_lo + (g_hi - g_lo) * c + rng.uniform(-j, j))
    # midpoints: e^{a x0_h} = (Q_h (1 + e^{a x0_l} t) - Q_l) / (Q_l t) with t = e^{-a x*}
    x0 = [cross[0] - cfg.low_half_offset] if n > 1 else [math.log2(cfg.first_crossover_kbps)]
    for i in range(n - 1):
        ql, qh, xs = ceilings[i], ceilings[i + 1], cross[i]
        # work in logs: log(c_h) = log(qh (1 + c_l t) - ql) - log(ql t)
        log_cl_t = a * (x0[i] - xs)
        val = qh * (1.0 + math.exp(log_cl_t)) - ql
        x0.append((math.log(val) - math.log(ql) + a * xs) / a)
    if n == 1:
        refs = [x0[0]]
    else:
        refs = []
        for i in range(n):
            if i == 0:
                centre = cross[0] - 0.5
            elif i == n - 1:
                centre = cross[-1] + 0.5
            else:
                centre = 0.5 * (cross[i - 1] + cross[i])
            refs.append(centre + rng.uniform(-j, j))
    return SynthVideo(vid, float(c), float(m), float(a), res, ceilings, tuple(x0), tuple(refs),
                      tuple(cross[: n - 1]) if n > 1 else ())


def synth_dataset(seed: int, n_videos: int, config: SynthConfig = SynthConfig()) -> SynthResult:
    """Seeded synthetic rate-quality dataset plus its generating parameters.

    Points are sampled at every CRF with ``b = b_ref(res) * 2^(-(crf - crf_ref)/halving)``;
    qualities are the exact curve values (no constraint filter applied).
    """
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    rng = np.random.default_rng(seed)
    width = max(3, len(str(n_videos - 1)))
    videos, points = {}, []
    for k in range(n_videos):
        vid = f"synth{k:0{width}d}"
        sv = _synth_video(vid, rng, config)
        videos[vid] = sv
        for r, xr in zip(sv.resolutions, sv.log2_refs):
            for crf in config.crfs:
                x = xr - (crf - config.crf_ref) / config.crf_halving
                q = float(sv.quality(r, x))
                points.append(RQPoint(vid, r[0], r[1], float(crf), float(2.0 ** x), q))
    return SynthResult(RQDataset(points), videos, config)


def synth_clip(video: SynthVideo, seed: int = 0, size: int = 64, frames: int = 4) -> VideoClip:
    """Small 8-bit clip whose texture and motion follow the video's latents.

    Complexity raises texture amplitude and fine detail; motion sets the
    per-frame translation.
    """
    digest = sum(ord(ch) * 131 ** i for i, ch in enumerate(video.video_id)) % (2 ** 32)
    rng = np.random.default_rng([seed, digest])
    c, m = video.complexity, video.motion
    base = rng.standard_normal((size, size))
    fine = gaussian_filter(base, 3.0 - 2.2 * c, mode="wrap")
    fine /= fine.std() + 1e-12
    amp = 8.0 + 48.0 * c
    shift = m * 6.0
    lumas, us, vs = [], [], []
    for k in range(frames):
        dx = int(round(k * shift))
        y = np.roll(fine, dx, axis=1) * amp + 128.0 + rng.standard_normal((size, size)) * 0.5
        lumas.append(np.clip(np.round(y), 0, 255).astype(np.uint8))
        us.append(np.full((size // 2, size // 2), 128, dtype=np.uint8))
        vs.append(np.full((size // 2, size // 2), 128, dtype=np.uint8))
    return VideoClip.from_arrays(np.stack(lumas), np.stack(us), np.stack(vs), bit_depth=8)


def filter_dataset(dataset: RQDataset, q_min: float = Q_MIN, q_max: float = Q_MAX) -> RQDataset:
    return dataset.filtered(q_min, q_max)
