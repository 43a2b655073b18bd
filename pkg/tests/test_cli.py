import csv
import json

import pytest

from shotladder.cli import main
from shotladder.ladders import BITRATE, QUALITY, Ladder
from shotladder.media import dump_y4m
from shotladder.orchestrator import synth_clip, synth_dataset, write_manifest

from conftest import make_clip

P = {432: (768, 432), 540: (960, 540), 720: (1280, 720), 1080: (1920, 1080), 1440: (2560, 1440),
     2160: (3840, 2160)}


@pytest.fixture
def manifest(tmp_path):
    res = synth_dataset(4, 12)
    p = tmp_path / "m.csv"
    write_manifest(res.dataset, p)
    return p, res


def _rows(path):
    return list(csv.reader(open(path)))


def test_correct_worked_example(tmp_path):
    before = Ladder.from_mapping(BITRATE, {4000: P[1080], 3000: P[720], 2000: P[1080], 1000: P[540],
                                           500: P[2160]})
    before.save(tmp_path / "b.json")
    assert main(["build-ladder", "--ladder", str(tmp_path / "b.json"), "--correct",
                 "--out", str(tmp_path / "a.json")]) == 0
    after = Ladder.load(tmp_path / "a.json")
    assert {lvl: r[1] for lvl, r in after.steps} == {4000: 1080, 3000: 720, 2000: 720, 1000: 540, 500: 540}


def test_correct_quality_ladder(tmp_path):
    before = Ladder.from_mapping(QUALITY, {92.5: P[540], 90: P[1440], 85: P[1080], 80: P[720], 75: P[1080]})
    before.save(tmp_path / "b.json")
    assert main(["build-ladder", "--ladder", str(tmp_path / "b.json"), "--correct",
                 "--out", str(tmp_path / "a.json")]) == 0
    assert [r[1] for r in Ladder.load(tmp_path / "a.json").resolutions] == [1080, 1080, 1080, 1440, 1440]


def test_evaluate_reference_is_its_own_reference(tmp_path, manifest):
    m, _ = manifest
    out = tmp_path / "r.csv"
    assert main(["evaluate", "--manifest", str(m), "--reference", "--out", str(out)]) == 0
    rows = _rows(out)
    body = [r for r in rows[1:] if r[0].startswith("synth")]
    assert len(body) == 12
    for r in body:
        assert abs(float(r[3])) < 1e-6 and abs(float(r[4])) < 1e-6
    assert rows[-3][0] == "f25"


def test_full_flow(tmp_path, manifest):
    m, res = manifest
    fdir = tmp_path / "feats"
    for vid, sv in res.videos.items():
        clip_path = tmp_path / f"{vid}.y4m"
        clip_path.write_bytes(dump_y4m(synth_clip(sv)))
        assert main(["extract-features", "--input", str(clip_path), "--set", "viff4",
                     "--feature-dir", str(fdir)]) == 0
    model = tmp_path / "q.xtrm"
    assert main(["train", "--task", "quality", "--features", "viff4", "--feature-dir", str(fdir),
                 "--manifest", str(m), "--out", str(model)]) == 0
    report = _rows(tmp_path / "q.report.csv")
    assert report[0] == ["resolution", "pearson", "n"] and report[-1][0] == "all"
    split = json.loads((tmp_path / "q.report.split.json").read_text())
    vid = split["test"][0]
    lad = tmp_path / "ladders"
    lad.mkdir()
    assert main(["build-ladder", "--model", str(model), "--features", str(fdir / f"{vid}.viff4.json"),
                 "--correct", "--out", str(lad / f"{vid}.json")]) == 0
    ladder = Ladder.load(lad / f"{vid}.json")
    assert len(ladder.steps) == 13 and ladder.is_monotone()
    out = tmp_path / "eval.csv"
    assert main(["evaluate", "--manifest", str(m), "--ladder", str(lad), "--out", str(out),
                 "--plots", str(tmp_path / "plots")]) == 0
    assert _rows(out)[1][0] == vid
    assert (tmp_path / "plots" / f"{vid}.png").stat().st_size > 0
    bmodel = tmp_path / "b.xtrm"
    assert main(["train", "--task", "bitrate", "--manifest", str(m), "--out", str(bmodel), "--seed", "3"]) == 0
    assert main(["build-ladder", "--model", str(bmodel), "--features", "none", "--kind", "quality",
                 "--out", str(tmp_path / "ql.json")]) == 0
    assert Ladder.load(tmp_path / "ql.json").kind == QUALITY


def test_train_is_deterministic(tmp_path, manifest):
    m, _ = manifest
    for name in ("a", "b"):
        assert main(["train", "--task", "quality", "--manifest", str(m), "--out", str(tmp_path / f"{name}.xtrm")]) == 0
    assert (tmp_path / "a.xtrm").read_bytes() == (tmp_path / "b.xtrm").read_bytes()
    assert (tmp_path / "a.report.csv").read_text() == (tmp_path / "b.report.csv").read_text()


def test_crossovers_and_ingest(tmp_path, manifest, capsys):
    m, _ = manifest
    out = tmp_path / "x.csv"
    assert main(["crossovers", "--manifest", str(m), "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["video_id", "lower", "higher", "crossover_kbps", "crossover_vmaf"]
    assert len(rows) == 1 + 12 * 5
    assert main(["ingest", "--manifest", str(m), "--filter", "--out", str(tmp_path / "f.json")]) == 0
    assert "12 videos" in capsys.readouterr().out


def test_plan_encodes(tmp_path):
    out = tmp_path / "plan.json"
    assert main(["plan-encodes", "--videos", "a.y4m", "b.y4m", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["jobs"]) == 276


def test_extract_features_stdout(tmp_path, capsys):
    p = tmp_path / "c.y4m"
    p.write_bytes(dump_y4m(make_clip(frames=3)))
    assert main(["extract-features", "--input", str(p), "--set", "viff1"]) == 0
    assert len(json.loads(capsys.readouterr().out)["values"]) == 4


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("video_id,width\n")
    assert main(["ingest", "--manifest", str(bad)]) == 1
    assert main(["--error-json", "ingest", "--manifest", str(tmp_path / "missing.csv")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 1
    assert main(["no-such-command"]) == 1
    assert main(["extract-features", "--input", str(bad), "--set", "viff99"]) == 1


def test_synth_property_failure_exit_code(tmp_path):
    # a single shallow tree on five videos cannot meet the gates
    cfg = tmp_path / "c.toml"
    cfg.write_text("[trees]\nn_trees = 1\nmax_features = 1\n")
    code = main(["--config", str(cfg), "synth", "--seed", "1", "--videos", "5", "--features", "none",
                 "--out", str(tmp_path / "o")])
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert not all(summary["checks"].values())
    assert code == 2


def test_synth_default_run_passes(tmp_path, capsys):
    assert main(["synth", "--seed", "7", "--videos", "30", "--out", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.count("PASS") == 4
    assert len(list((tmp_path / "o" / "ladders").glob("*.json"))) == 30
