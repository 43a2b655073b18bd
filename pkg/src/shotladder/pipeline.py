"""End-to-end synthetic run: data, features, training, ladders and evaluation."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import trees
from .bd import BdReport, BdReportRow, Closeness, bd_metrics, closeness, pair_map
from .features import extract_features, parse_feature_sets
from .ladders import (BITRATE, BITRATE_MODEL_META, QUALITY, QUALITY_MODEL_META, Ladder, LadderConfig,
                      build_bitrate_ladder, build_quality_ladder, correct, ladder_to_hull,
                      quality_model_row, reference_ladder)
from .orchestrator import (QUALITY_TASK, SplitSpec, SynthConfig, SynthVideo, assemble_training,
                           rotating_splits, synth_clip, synth_dataset)
from .rq import RQDataset, RQPoint, check_monotonic, pareto_front
from .vector import FeatureVector

# resolution chosen per bitrate step for the synthetic runs; deliberately content-blind
EXAMPLE_FIXED_LADDER = Ladder(BITRATE, (
    (500, (768, 432)), (1000, (768, 432)), (2000, (960, 540)), (3000, (960, 540)),
    (4000, (1280, 720)), (5000, (1280, 720)), (6000, (1280, 720)), (7000, (1920, 1080)),
    (8000, (1920, 1080)), (9000, (1920, 1080)), (10500, (1920, 1080)), (12000, (2560, 1440)),
    (15000, (2560, 1440)),
))

_UNREACHABLE = 1e9


class GroundTruthQualityModel:
    """Best quality any encode at a resolution reaches without exceeding the bitrate.

    Inside a resolution's sampled span this is the true curve; above it the
    top encode's quality; below it nothing is available (predicted 0).
    """

    feature_names = QUALITY_MODEL_META

    def __init__(self, video: SynthVideo, spans: dict):
        self.video, self.spans = video, spans

    def _res(self, wn: float, hn: float):
        for r in self.video.resolutions:
            if math.isclose(r[0] / 3840.0, wn) and math.isclose(r[1] / 3840.0, hn):
                return r
        raise ValueError("unknown resolution in model input")

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(X.shape[0])
        for i, (x, wn, hn) in enumerate(X):
            r = self._res(wn, hn)
            lo, hi = self.spans[r]
            out[i] = 0.0 if x < lo else float(self.video.quality(r, min(x, hi))) / 100.0
        return out


class GroundTruthBitrateModel(GroundTruthQualityModel):
    """Cheapest log2 bitrate at which a resolution reaches a quality (unreachable: huge)."""

    feature_names = BITRATE_MODEL_META

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(X.shape[0])
        for i, (qn, wn, hn) in enumerate(X):
            r = self._res(wn, hn)
            lo, hi = self.spans[r]
            q_lo, q_hi = (float(self.video.quality(r, lo)), float(self.video.quality(r, hi)))
            q = qn * 100.0
            if q > q_hi:
                out[i] = _UNREACHABLE
            else:
                out[i] = lo if q <= q_lo else float(self.video.log2_bitrate(r, q))
        return out


def true_spans(video: SynthVideo, cfg: SynthConfig) -> dict:
    return {r: video.log2_span(r, cfg.crfs, cfg.crf_ref, cfg.crf_halving) for r in video.resolutions}


def true_points(video: SynthVideo, cfg: SynthConfig, ladder_cfg: LadderConfig) -> list[RQPoint]:
    """Encodes on the CRF grid plus exact points at every ladder step inside each span."""
    spans = true_spans(video, cfg)
    pts = []
    for r in video.resolutions:
        lo, hi = spans[r]
        xr = video.log2_refs[video.index(r)]
        # (bitrate, quality) pairs; step values are kept exact so ties with the oracle are not lost to rounding
        pairs = [(2.0 ** x, float(video.quality(r, x)))
                 for x in (xr - (c - cfg.crf_ref) / cfg.crf_halving for c in cfg.crfs)]
        pairs += [(float(b), float(video.quality(r, math.log2(b))))
                  for b in ladder_cfg.bitrate_steps if lo <= math.log2(b) <= hi]
        q_lo, q_hi = float(video.quality(r, lo)), float(video.quality(r, hi))
        pairs += [(2.0 ** float(video.log2_bitrate(r, q)), float(q))
                  for q in ladder_cfg.quality_steps if q_lo <= q <= q_hi]
        for b, q in sorted(set(pairs)):
            crf = cfg.crf_ref - (math.log2(b) - xr) * cfg.crf_halving
            pts.append(RQPoint(video.video_id, r[0], r[1], crf, b, q))
    return pts


@dataclass
class OracleCheck:
    video_id: str
    kind: str
    compared: int
    mismatched: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatched


def oracle_ladder_check(video: SynthVideo, cfg: SynthConfig, ladder_cfg: LadderConfig, kind: str) -> OracleCheck:
    """Ground-truth-predictor ladder against the reference ladder of the true front."""
    spans = true_spans(video, cfg)
    front = pareto_front(true_points(video, cfg, ladder_cfg))
    ref = reference_ladder(front, ladder_cfg, kind).as_dict()
    if kind == BITRATE:
        built = build_bitrate_ladder(GroundTruthQualityModel(video, spans), None, ladder_cfg).as_dict()
    else:
        built = build_quality_ladder(GroundTruthBitrateModel(video, spans), None, ladder_cfg).as_dict()
    bad = [(lvl, ref[lvl], built[lvl]) for lvl in ref if ref[lvl] != built[lvl]]
    return OracleCheck(video.video_id, kind, len(ref), bad)


@dataclass
class SynthRunResult:
    seed: int
    n_videos: int
    feature_set: str
    oracle_checks: list[OracleCheck]
    report: BdReport
    closeness: Closeness
    monotone_series: int
    total_series: int
    splits: list[SplitSpec]
    ladders: dict[str, Ladder]
    correlations: dict[str, float]
    seconds: float
    params: trees.TreesParams | None = None

    @property
    def oracle_ok(self) -> bool:
        return all(c.ok for c in self.oracle_checks)

    @property
    def mean_bd_rate_vs_reference(self) -> float:
        return self.report.summary()["vs_reference.bd_rate"][0]

    @property
    def monotone_fraction(self) -> float:
        return self.monotone_series / self.total_series if self.total_series else math.nan


def content_features(result, feature_set: str, seed: int, cfg: SynthConfig) -> dict[str, FeatureVector]:
    if not parse_feature_sets(feature_set):
        return {}
    return {vid: extract_features(synth_clip(sv, seed, cfg.clip_size, cfg.clip_frames), feature_set, vid)
            for vid, sv in result.videos.items()}


def _fit_quality_model(data: RQDataset, feats: dict, feature_set: str, params: trees.TreesParams):
    mat = assemble_training(data, feats if feats else None, QUALITY_TASK, feature_set)
    return trees.fit(mat, params)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or a.std() == 0 or b.std() == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])


def run_synthetic(seed: int = 7, n_videos: int = 30, feature_set: str = "viff4",
                  parts: Sequence[float] = (0.7, 0.1, 0.2), synth_cfg: SynthConfig = SynthConfig(),
                  ladder_cfg: LadderConfig | None = None,
                  params: trees.TreesParams = trees.TreesParams(n_trees=100, max_features=0.34, rng_seed=0),
                  eps: float = 0.5) -> SynthRunResult:
    """Full synthetic pipeline.

    Every video is predicted by a model that never saw it: ratio splits are
    rotated so that their test parts tile the video set.
    """
    t0 = time.perf_counter()
    ladder_cfg = ladder_cfg or LadderConfig(fixed_ladder=EXAMPLE_FIXED_LADDER)
    fixed = ladder_cfg.fixed_ladder or EXAMPLE_FIXED_LADDER
    synth = synth_dataset(seed, n_videos, synth_cfg)
    data = synth.dataset.filtered()

    checks = []
    for sv in synth.videos.values():
        for kind in (BITRATE, QUALITY):
            checks.append(oracle_ladder_check(sv, synth_cfg, ladder_cfg, kind))

    feats = content_features(synth, feature_set, seed, synth_cfg)
    splits = rotating_splits(data, parts, seed)
    rows, ladders = [], {}
    mono_ok = total = 0
    preds, targets, res_of = [], [], []
    for split in splits:
        model = _fit_quality_model(data.subset(split.train), feats, feature_set, params)
        held = data.subset(split.validation + split.test)
        mat = assemble_training(held, feats if feats else None, QUALITY_TASK, feature_set)
        preds.append(model.predict(mat.X))
        targets.append(mat.y)
        res_of += [f"{int(round(h * 3840))}p" for h in mat.X[:, -1]]
        for vid in split.test:
            vec = feats.get(vid)
            ladder = correct(build_bitrate_ladder(model, vec, ladder_cfg))
            ladders[vid] = ladder
            pts = data.for_video(vid).points
            ref = reference_ladder(pareto_front(pts), ladder_cfg, BITRATE)
            hull_m, hull_f, hull_r = (ladder_to_hull(lad, pts) for lad in (ladder, fixed, ref))
            try:
                row = BdReportRow(vid, bd_metrics(hull_m, hull_f), bd_metrics(hull_m, hull_r))
                ref_row = bd_metrics(hull_r, hull_f)
            except ValueError as e:
                rows.append((BdReportRow(vid, None, None, f"bd undefined: {e}"), None))
                continue
            rows.append((row, ref_row))
            content = vec.resolve(bitrate=None) if vec is not None and vec.coupling is None else None
            for r in ladder_cfg.by_pixels():
                series = []
                for b in ladder_cfg.bitrate_steps:
                    c = vec.resolve(bitrate=b) if vec is not None else np.empty(0)
                    series.append(float(model.predict(quality_model_row(c if content is None else content, b, r))))
                total += 1
                mono_ok += bool(check_monotonic(np.log2(ladder_cfg.bitrate_steps), np.array(series) * 100.0, eps))

    report = BdReport([r for r, _ in rows])
    method = pair_map([r for r, ref in rows if ref is not None], "vs_fixed")
    reference = {r.video_id: (ref.bd_rate, ref.bd_quality) for r, ref in rows if ref is not None}
    close = closeness(method, reference)
    p, t = np.concatenate(preds), np.concatenate(targets)
    labels = np.array(res_of)
    corr = {lab: _pearson(p[labels == lab], t[labels == lab]) for lab in sorted(set(res_of), key=lambda s: int(s[:-1]))}
    corr["all"] = _pearson(p, t)
    return SynthRunResult(seed, n_videos, feature_set, checks, report, close, mono_ok, total, splits, ladders,
                          corr, time.perf_counter() - t0, params)


def reference_bd_pairs(result: SynthRunResult) -> dict[str, tuple[float, float]]:
    return pair_map(result.report.rows, "vs_reference")
