import json

import numpy as np
import pytest

from shotladder.features import extract_features
from shotladder.orchestrator import (BITRATE_TASK, DEFAULT_CRFS, QUALITY_TASK, EncodeConfig, FeatureStore,
                                     ManifestError, assemble_training, emit_manifest,
                                     ingest_manifest, parse_manifest_csv, parse_manifest_json, plan_encodes,
                                     rotating_splits, split_grouped, synth_clip, synth_dataset, write_manifest)
from shotladder.rq import RQDataset, RQPoint, crossover_log2_bitrate

from conftest import make_clip

HEADER = "video_id,width,height,crf,bitrate_kbps,vmaf\n"


# -- encode planning -------------------------------------------------------------------

def test_default_grid_size():
    assert len(DEFAULT_CRFS) == 23
    plan = plan_encodes(["/src/a.y4m"])
    assert len(plan) == 138
    two = plan_encodes(["/src/a.y4m", "/src/b.y4m"])
    assert len(two) == 276
    assert len({(j.video_id, j.width, j.height, j.crf) for j in two.jobs}) == 276
    assert len({j.output for j in two.jobs}) == 276


def test_single_job_and_commands():
    plan = plan_encodes([("clip", "/x/clip.y4m")], EncodeConfig(resolutions=((1920, 1080),), crfs=(20,)))
    (job,) = plan.jobs
    assert (job.width, job.height, job.crf) == (1920, 1080, 20)
    assert "scale=1920:1080" in job.encode_cmd and "libx265" in job.encode_cmd
    assert job.encode_cmd[-1] == job.output == job.quality_cmd[2]
    assert json.loads(plan.to_json())["jobs"][0]["video_id"] == "clip"


def test_plan_errors():
    with pytest.raises(ValueError):
        plan_encodes([])
    with pytest.raises(ValueError):
        plan_encodes(["/a/x.y4m", "/b/x.y4m"])


# -- manifests -----------------------------------------------------------------------------

def test_ingest_three_rows():
    ds = parse_manifest_csv(HEADER + "a,1920,1080,20,3000,80\na,1920,1080,22,2500,77.5\nb,1280,720,20,900,60\n")
    assert len(ds) == 3 and ds.videos() == ["a", "b"]


def test_duplicate_names_both_lines():
    with pytest.raises(ManifestError, match=r"line 2.*line 4"):
        parse_manifest_csv(HEADER + "a,1920,1080,20,3000,80\nb,1920,1080,20,3000,80\na,1920,1080,20,2900,79\n")


@pytest.mark.parametrize("row, msg", [
    ("a,1920,1080,20,3000,101", "line 2"),
    ("a,1920,1080,20,0,50", "bitrate"),
    ("a,1920,1080,20,abc,50", "non-numeric"),
    ("a,-1,1080,20,3000,50", "positive"),
])
def test_row_rejections(row, msg):
    with pytest.raises(ManifestError, match=msg):
        parse_manifest_csv(HEADER + row + "\n")


def test_missing_column():
    with pytest.raises(ManifestError, match="vmaf"):
        parse_manifest_csv("video_id,width,height,crf,bitrate_kbps\na,1,1,1,1\n")


def test_json_manifest_errors():
    with pytest.raises(ManifestError, match="row 1"):
        parse_manifest_json('[{"video_id": "a", "width": 1, "height": 1, "crf": 1, "bitrate_kbps": 1}]')
    with pytest.raises(ManifestError, match="line"):
        parse_manifest_json("[{")


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_manifest_round_trip(tmp_path, suffix):
    ds = synth_dataset(3, 2).dataset
    p = tmp_path / f"m{suffix}"
    write_manifest(ds, p)
    again = ingest_manifest(p)
    assert sorted(again.points, key=repr) == sorted(ds.points, key=repr)
    assert emit_manifest(again) == emit_manifest(ds)


# -- training matrices ------------------------------------------------------------------------

def _meta_only_point():
    return RQPoint("v", 3840, 2160, 20, 4096, 80)


def test_quality_task_metadata():
    m = assemble_training([_meta_only_point()], None, QUALITY_TASK)
    np.testing.assert_array_equal(m.X[0], [12.0, 1.0, 0.5625])
    assert m.y[0] == 0.8 and list(m.groups) == ["v"]


def test_bitrate_task_metadata():
    m = assemble_training([_meta_only_point()], None, BITRATE_TASK)
    np.testing.assert_array_equal(m.X[0], [0.8, 1.0, 0.5625])
    assert m.y[0] == 12.0


def test_training_with_features_and_store(tmp_path):
    pts = [RQPoint("v", 1920, 1080, c, 1000 * (c - 10), 50 + c) for c in (20, 22, 24)]
    pts.append(RQPoint("w", 1280, 720, 20, 800, 40))
    vecs = {vid: extract_features(make_clip(seed=i), "viff4+llf2", vid) for i, vid in enumerate(("v", "w"))}
    m = assemble_training(RQDataset(pts).filtered(), vecs, QUALITY_TASK, "viff4+llf2")
    assert m.X.shape == (4, 5 + 96 + 3) and len(m.feature_names) == m.X.shape[1]
    # coupled DCT slots follow each row's own bitrate
    row = [i for i, g in enumerate(m.groups) if g == "v"][0]
    np.testing.assert_allclose(m.X[row, :101], vecs["v"].resolve(bitrate=10000))
    store = FeatureStore(tmp_path)
    for v in vecs.values():
        store.put(v)
    m2 = assemble_training(pts, store, QUALITY_TASK, "viff4+llf2")
    np.testing.assert_array_equal(m.X, m2.X)
    with pytest.raises(ValueError):
        assemble_training(pts, vecs, BITRATE_TASK)
    with pytest.raises(KeyError):
        assemble_training(pts, {"v": vecs["v"]}, QUALITY_TASK)
    with pytest.raises(ValueError):
        assemble_training([], None, QUALITY_TASK)


# -- splits ------------------------------------------------------------------------------------

def test_split_counts():
    vids = [f"v{i:03d}" for i in range(100)]
    s = split_grouped(vids, (70, 10, 20), seed=4)
    assert (len(s.train), len(s.validation), len(s.test)) == (70, 10, 20)
    assert not (set(s.train) & set(s.test)) and not (set(s.train) & set(s.validation))
    assert split_grouped(vids, (70, 10, 20), seed=4) == s
    assert split_grouped(vids, (70, 10, 20), seed=5) != s
    with pytest.raises(ValueError):
        split_grouped(vids[:10], (70, 10, 20))


def test_split_ratios_and_rotation():
    vids = [f"v{i}" for i in range(30)]
    s = split_grouped(vids, (0.7, 0.1, 0.2), seed=1)
    assert (len(s.train), len(s.validation), len(s.test)) == (21, 3, 6)
    rot = rotating_splits(vids, (0.7, 0.1, 0.2), seed=1)
    assert len(rot) == 5
    tested = [v for r in rot for v in r.test]
    assert sorted(tested) == sorted(vids)
    for r in rot:
        assert len(r.train) == 21 and not set(r.train) & set(r.test)


# -- synthetic data ------------------------------------------------------------------------------

def test_synth_curves_strictly_increasing():
    res = synth_dataset(11, 5)
    for vid in res.dataset.videos():
        for r in res.dataset.resolutions(vid):
            c = res.dataset.curve(vid, r)
            assert np.all(np.diff(c.q) > 0)
            assert len(c.x) == len(DEFAULT_CRFS)


def test_synth_deterministic():
    a, b = synth_dataset(5, 4), synth_dataset(5, 4)
    assert a.dataset.points == b.dataset.points
    assert a.videos == b.videos
    assert synth_dataset(6, 4).dataset.points != a.dataset.points


def test_synth_crossovers_match_sampled_curves():
    res = synth_dataset(21, 20)
    checked = 0
    for vid, sv in res.videos.items():
        for i in range(len(sv.resolutions) - 1):
            lo_c = res.dataset.curve(vid, sv.resolutions[i])
            hi_c = res.dataset.curve(vid, sv.resolutions[i + 1])
            got = crossover_log2_bitrate(lo_c, hi_c)
            x_true = sv.crossovers[i]
            inside = max(lo_c.x[0], hi_c.x[0]) < x_true < min(lo_c.x[-1], hi_c.x[-1])
            if not inside:
                continue
            # the widest spacing of the CRF grid, in octaves
            step = max(np.diff(lo_c.x).max(), np.diff(hi_c.x).max())
            assert got is not None and abs(got - x_true) <= step
            # the analytic curves agree there
            assert float(sv.quality(sv.resolutions[i], x_true)) == pytest.approx(
                float(sv.quality(sv.resolutions[i + 1], x_true)), abs=1e-9)
            checked += 1
    assert checked >= 50


def test_synth_clip_follows_latents():
    res = synth_dataset(2, 12)
    by_c = sorted(res.videos.values(), key=lambda v: v.complexity)
    flat, busy = synth_clip(by_c[0]), synth_clip(by_c[-1])
    assert flat.luma_stack().std() < busy.luma_stack().std()
    assert synth_clip(by_c[0]).luma_stack().tobytes() == flat.luma_stack().tobytes()


def test_synth_rejects_empty():
    with pytest.raises(ValueError):
        synth_dataset(0, 0)
