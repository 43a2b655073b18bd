"""Command-line interface.

Exit codes: 0 success, 1 validation or input error, 2 property/acceptance failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import trees
from .bd import BdReport, BdReportRow, bd_metrics, closeness, pair_map
from .config import load_config
from .features import extract_features
from .ladders import (BITRATE, QUALITY, Ladder, build_bitrate_ladder, build_quality_ladder, correct, ladder_to_hull,
                      reference_ladder, res_label)
from .media import load_y4m
from .orchestrator import (BITRATE_TASK, QUALITY_TASK, FeatureStore, assemble_training, ingest_manifest,
                           plan_encodes, split_grouped, write_manifest)
from .rq import crossover_bitrate, crossover_quality, pareto_front
from .vector import FeatureVector

EXIT_OK, EXIT_INVALID, EXIT_PROPERTY = 0, 1, 2


class PropertyFailure(Exception):
    pass


def _features_for(args, videos) -> dict[str, FeatureVector] | None:
    if args.features in (None, "none"):
        return None
    store = FeatureStore(args.feature_dir)
    return {v: store.get(v, args.features) for v in videos}


# -- subcommands -----------------------------------------------------------------

def cmd_extract_features(args, cfg) -> int:
    clip = load_y4m(args.input)
    vid = args.video_id or Path(args.input).stem
    vec = extract_features(clip, args.set, vid)
    if args.out:
        vec.save(args.out)
    if args.feature_dir:
        FeatureStore(args.feature_dir).put(vec)
    if not args.out and not args.feature_dir:
        sys.stdout.write(json.dumps(vec.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_plan_encodes(args, cfg) -> int:
    plan = plan_encodes(args.videos, cfg.encode_config(args.output_dir))
    text = plan.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"{len(plan)} jobs", file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args, cfg) -> int:
    ds = ingest_manifest(args.manifest)
    kept = ds.filtered(*cfg.q_range) if args.filter else ds
    if args.out:
        write_manifest(kept, args.out)
    print(f"{len(ds)} rows, {len(ds.videos())} videos, {len(kept)} within constraints")
    return EXIT_OK


def _correlations(model, mat) -> list[tuple[str, float, int]]:
    pred = model.predict(mat.X)
    h = np.rint(mat.X[:, -1] * 3840).astype(int)
    rows = []
    for hv in sorted(set(h.tolist())):
        m = h == hv
        a, b = pred[m], mat.y[m]
        r = float(np.corrcoef(a, b)[0, 1]) if m.sum() > 1 and a.std() > 0 and b.std() > 0 else math.nan
        rows.append((f"{hv}p", r, int(m.sum())))
    a, b = pred, mat.y
    rows.append(("all", float(np.corrcoef(a, b)[0, 1]) if a.std() > 0 and b.std() > 0 else math.nan, len(b)))
    return rows


def cmd_train(args, cfg) -> int:
    ds = ingest_manifest(args.manifest).filtered(*cfg.q_range)
    split_cfg = cfg.section("split")
    seed = args.split if args.split is not None else int(split_cfg.get("seed", 0))
    split = split_grouped(ds, tuple(split_cfg.get("ratios", (0.7, 0.1, 0.2))), seed)
    feats = _features_for(args, ds.videos())
    task = QUALITY_TASK if args.task == "quality" else BITRATE_TASK
    train = assemble_training(ds.subset(split.train), feats, task, args.features)
    model = trees.fit(train, cfg.trees_params(rng_seed=args.seed))
    trees.save_file(model, args.out)
    held_ids = split.validation + split.test
    report = Path(args.report) if args.report else Path(args.out).with_suffix(".report.csv")
    with open(report, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["resolution", "pearson", "n"])
        if held_ids:
            held = assemble_training(ds.subset(held_ids), feats, task, args.features)
            for lab, r, n in _correlations(model, held):
                w.writerow([lab, "" if math.isnan(r) else f"{r:.6f}", n])
    Path(report).with_suffix(".split.json").write_text(json.dumps(split.to_dict(), indent=1) + "\n")
    print(f"trained on {len(train)} rows from {len(split.train)} videos -> {args.out}")
    return EXIT_OK


def cmd_build_ladder(args, cfg) -> int:
    lcfg = cfg.ladder_config()
    if args.ladder:
        ladder = Ladder.load(args.ladder)
    else:
        if not (args.model and args.features_file):
            raise ValueError("build-ladder needs --ladder, or --model with --features")
        model = trees.load_file(args.model)
        vec = FeatureVector.load(args.features_file) if args.features_file != "none" else None
        kind = BITRATE if args.kind == "bitrate" else QUALITY
        ladder = (build_bitrate_ladder if kind == BITRATE else build_quality_ladder)(model, vec, lcfg)
    if args.correct:
        ladder = correct(ladder)
    text = ladder.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_crossovers(args, cfg) -> int:
    ds = ingest_manifest(args.manifest).filtered(*cfg.q_range)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["video_id", "lower", "higher", "crossover_kbps", "crossover_vmaf"])
        for vid in ds.videos():
            res = ds.resolutions(vid)
            for lo, hi in zip(res, res[1:]):
                a, b = ds.curve(vid, lo), ds.curve(vid, hi)
                try:
                    cb = crossover_bitrate(a, b)
                except ValueError:
                    cb = None
                try:
                    cq = crossover_quality(a, b)
                except ValueError:
                    cq = None
                w.writerow([vid, res_label(lo), res_label(hi), "" if cb is None else f"{cb:.3f}",
                            "" if cq is None else f"{cq:.4f}"])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _parse_ladder_args(items: list[str]) -> dict[str, Ladder]:
    out = {}
    for item in items:
        vid, _, path = item.rpartition("=")
        p = Path(path)
        if p.is_dir():
            for f in sorted(p.glob("*.json")):
                out[f.stem] = Ladder.load(f)
        else:
            out[vid or p.stem] = Ladder.load(p)
    return out


def _plot_video(path: Path, vid: str, pts, hulls: dict) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for r in sorted({p.resolution for p in pts}, key=lambda r: r[0] * r[1]):
        sel = sorted((p for p in pts if p.resolution == r), key=lambda p: p.bitrate)
        ax.plot([p.bitrate for p in sel], [p.quality for p in sel], lw=0.8, label=res_label(r))
    for name, hull in hulls.items():
        ax.plot([p.bitrate for p in hull], [p.quality for p in hull], "o", ms=3, label=name)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("bitrate (kbps)")
    ax.set_ylabel("VMAF")
    ax.set_title(vid)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_evaluate(args, cfg) -> int:
    ds = ingest_manifest(args.manifest).filtered(*cfg.q_range)
    lcfg = cfg.ladder_config()
    fixed = Ladder.load(args.fixed) if args.fixed else lcfg.fixed_ladder
    if fixed is None:
        raise ValueError("no fixed ladder given")
    methods = _parse_ladder_args(args.ladder or [])
    videos = sorted(methods) if methods else ds.videos()
    if not args.reference and not methods:
        raise ValueError("give --ladder and/or --reference")
    rows, ref_pairs = [], {}
    plot_dir = Path(args.plots) if args.plots else None
    if plot_dir:
        plot_dir.mkdir(parents=True, exist_ok=True)
    mono_fail = []
    for vid in videos:
        pts = ds.for_video(vid).points
        if not pts:
            raise ValueError(f"video {vid!r} absent from manifest")
        ref = reference_ladder(pareto_front(pts), lcfg, BITRATE)
        method = methods.get(vid, ref)
        if not method.is_monotone():
            mono_fail.append(vid)
        hm, hf, hr = (ladder_to_hull(lad, pts) for lad in (method, fixed, ref))
        try:
            rows.append(BdReportRow(vid, bd_metrics(hm, hf), bd_metrics(hm, hr)))
            r = bd_metrics(hr, hf)
            ref_pairs[vid] = (r.bd_rate, r.bd_quality)
        except ValueError as e:
            rows.append(BdReportRow(vid, None, None, f"bd undefined: {e}"))
        if plot_dir:
            _plot_video(plot_dir / f"{vid}.png", vid, pts, {"method": hm, "fixed": hf, "reference": hr})
    report = BdReport(rows)
    method_pairs = {k: v for k, v in pair_map(rows, "vs_fixed").items() if k in ref_pairs}
    close = closeness(method_pairs, ref_pairs) if method_pairs else None
    report.write_csv(args.out, close)
    s = report.summary()
    print(f"BD-rate vs fixed {s['vs_fixed.bd_rate'][0]:.3f}%  vs reference {s['vs_reference.bd_rate'][0]:.3f}%")
    if close:
        print(f"f25={close.f25:.3f} f50={close.f50:.3f} f75={close.f75:.3f}")
    if mono_fail:
        print(f"non-monotone ladders: {', '.join(mono_fail)}")
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    from .pipeline import run_synthetic

    lcfg = cfg.ladder_config()
    eps = float(cfg.section("evaluate").get("monotonic_eps", 0.5))
    res = run_synthetic(args.seed, args.videos, args.features, tuple(cfg.section("split")["ratios"]),
                        ladder_cfg=lcfg, params=cfg.trees_params(), eps=eps)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        res.report.write_csv(out / "report.csv", res.closeness)
        for vid, lad in res.ladders.items():
            (out / "ladders").mkdir(exist_ok=True)
            lad.save(out / "ladders" / f"{vid}.json")
    checks = {
        "oracle ladders equal reference ladders": res.oracle_ok,
        f"mean BD-rate vs reference {res.mean_bd_rate_vs_reference:+.3f}% <= +3%": res.mean_bd_rate_vs_reference <= 3.0,
        f"f25 {res.closeness.f25:.3f} >= 0.8": res.closeness.f25 >= 0.8,
        f"monotone series {res.monotone_fraction:.3f} >= 0.95": res.monotone_fraction >= 0.95,
    }
    summary = {"seed": args.seed, "videos": args.videos, "features": args.features,
               "mean_bd_rate_vs_reference": res.mean_bd_rate_vs_reference,
               "closeness": res.closeness.as_dict(), "monotone_fraction": res.monotone_fraction,
               "correlations": res.correlations, "checks": checks}
    if args.timings:
        summary["seconds"] = res.seconds
    if out:
        (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if not all(checks.values()):
        raise PropertyFailure("synthetic acceptance checks failed")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shotladder", description="Per-shot bitrate and quality ladders.")
    p.add_argument("--config", help="TOML file overriding the packaged defaults")
    p.add_argument("--error-json", action="store_true", help="print errors as JSON on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract-features", help="extract a feature set from a Y4M clip")
    s.add_argument("--input", required=True)
    s.add_argument("--set", required=True, help="e.g. viff7, llf2, llf2+viff7")
    s.add_argument("--out")
    s.add_argument("--video-id")
    s.add_argument("--feature-dir", help="also store in this feature store directory")
    s.set_defaults(func=cmd_extract_features)

    s = sub.add_parser("plan-encodes", help="emit the encode/quality job list")
    s.add_argument("--videos", nargs="+", required=True)
    s.add_argument("--out")
    s.add_argument("--output-dir", default="encodes")
    s.set_defaults(func=cmd_plan_encodes)

    s = sub.add_parser("ingest", help="validate a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="write the (optionally filtered) manifest")
    s.add_argument("--filter", action="store_true", help="apply the quality constraints")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="fit a quality or bitrate model")
    s.add_argument("--task", choices=("quality", "bitrate"), required=True)
    s.add_argument("--features", default="none", help="feature set id, or none for metadata only")
    s.add_argument("--feature-dir", default="features")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", type=int, help="split seed")
    s.add_argument("--seed", type=int, help="tree seed")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("build-ladder", help="build and/or correct a ladder")
    s.add_argument("--model")
    s.add_argument("--features", dest="features_file", help="feature vector JSON, or none")
    s.add_argument("--kind", choices=("bitrate", "quality"), default="bitrate")
    s.add_argument("--ladder", help="existing ladder JSON to correct")
    s.add_argument("--correct", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_build_ladder)

    s = sub.add_parser("crossovers", help="true cross-over bitrates and qualities per adjacent pair")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_crossovers)

    s = sub.add_parser("evaluate", help="BD metrics and closeness of ladders")
    s.add_argument("--manifest", required=True)
    s.add_argument("--ladder", action="append", help="PATH, VIDEO=PATH or a directory of VIDEO.json")
    s.add_argument("--fixed", help="fixed ladder JSON (default from config)")
    s.add_argument("--reference", action="store_true", help="evaluate reference ladders where no ladder is given")
    s.add_argument("--out", default="report.csv")
    s.add_argument("--plots", help="directory for RQ/hull plots")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="end-to-end run on synthetic data")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--videos", type=int, default=30)
    s.add_argument("--features", default="viff4")
    s.add_argument("--out")
    s.add_argument("--timings", action="store_true", help="include wall time in the summary")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for property failures here
        return EXIT_INVALID if e.code else EXIT_OK

    def fail(code: int, exc: BaseException) -> int:
        if args.error_json:
            print(json.dumps({"error": str(exc), "type": type(exc).__name__, "exit_code": code}), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return code

    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except PropertyFailure as e:
        return fail(EXIT_PROPERTY, e)
    except (ValueError, KeyError, OSError) as e:
        return fail(EXIT_INVALID, e)


if __name__ == "__main__":
    sys.exit(main())
