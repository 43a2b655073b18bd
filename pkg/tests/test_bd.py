import csv
import math

import numpy as np
import pytest
from scipy import integrate

from shotladder.bd import (BdError, BdReport, BdReportRow, bd_metrics, bd_quality, bd_rate, closeness,
                           pair_map)
from shotladder.rq import RQPoint

ANCHOR = [(500, 40.0), (1000, 55.0), (2000, 68.0), (4000, 78.0), (8000, 85.0)]


def shift(points, d_log2=0.0, d_q=0.0):
    return [(b * 2.0 ** d_log2, q + d_q) for b, q in points]


def test_identity_is_zero():
    assert bd_rate(ANCHOR, ANCHOR) == pytest.approx(0.0, abs=1e-9)
    assert bd_quality(ANCHOR, ANCHOR) == pytest.approx(0.0, abs=1e-9)


def test_rate_shift_halves_bitrate():
    assert bd_rate(shift(ANCHOR, -1.0), ANCHOR) == pytest.approx(-50.0, abs=1e-9)
    assert bd_rate(ANCHOR, shift(ANCHOR, -1.0)) == pytest.approx(100.0, abs=1e-9)


@pytest.mark.parametrize("delta", [-0.7, -0.2, 0.3, 1.1])
def test_rate_shift_antisymmetry(delta):
    t = shift(ANCHOR, delta)
    assert bd_rate(t, ANCHOR) == pytest.approx(100 * (2 ** delta - 1), abs=1e-8)
    assert bd_rate(ANCHOR, t) == pytest.approx(100 * (2 ** -delta - 1), abs=1e-8)


def test_quality_offset():
    assert bd_quality(shift(ANCHOR, d_q=5.0), ANCHOR) == pytest.approx(5.0, abs=1e-6)


def test_axis_scaling_invariance():
    t = shift(ANCHOR, -0.3, 1.5)
    base = bd_metrics(t, ANCHOR)
    scaled = bd_metrics(shift(t, 2.0), shift(ANCHOR, 2.0))
    assert scaled.bd_rate == pytest.approx(base.bd_rate, abs=1e-8)
    assert scaled.bd_quality == pytest.approx(base.bd_quality, abs=1e-8)


def test_accepts_rq_points():
    pts = [RQPoint("v", 1920, 1080, i, b, q) for i, (b, q) in enumerate(ANCHOR)]
    assert bd_rate(pts, ANCHOR) == pytest.approx(0.0, abs=1e-9)


def test_errors():
    with pytest.raises(BdError):
        bd_rate(ANCHOR[:3], ANCHOR)
    far = [(b * 1e6, q + 200) for b, q in ANCHOR]
    with pytest.raises(BdError):
        bd_quality(far, ANCHOR)
    with pytest.raises(BdError):
        bd_rate([(b, q + 100) for b, q in ANCHOR], ANCHOR)


def _panel_mean(f, lo, hi, panels=100_000):
    x = np.linspace(lo, hi, panels + 1)
    return integrate.simpson(f(x), x=x) / (hi - lo)


@pytest.mark.parametrize("seed", range(5))
def test_quality_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    pa, pt = np.poly1d(rng.normal(size=4)), np.poly1d(rng.normal(size=4))
    xa, xt = np.linspace(9.0, 13.0, 6), np.linspace(9.5, 13.5, 7)
    anchor = [(2 ** x, pa(x)) for x in xa]
    test = [(2 ** x, pt(x)) for x in xt]
    want = _panel_mean(lambda x: pt(x) - pa(x), 9.5, 13.0)
    assert bd_quality(test, anchor) == pytest.approx(want, rel=1e-4, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_rate_matches_quadrature(seed):
    rng = np.random.default_rng(10 + seed)
    # log2 bitrate as a cubic of quality, so the cubic fit is exact
    ca, ct = rng.normal(scale=[1e-5, 1e-3, 0.05, 0.5]), rng.normal(scale=[1e-5, 1e-3, 0.05, 0.5])
    ca[-1] += 11.0
    ct[-1] += 11.0
    fa, ft = np.poly1d(ca), np.poly1d(ct)
    qa, qt = np.linspace(30.0, 90.0, 8), np.linspace(35.0, 85.0, 6)
    anchor = [(2 ** fa(q), q) for q in qa]
    test = [(2 ** ft(q), q) for q in qt]
    gap = _panel_mean(lambda q: ft(q) - fa(q), 35.0, 85.0)
    want = 100 * (2 ** gap - 1)
    assert bd_rate(test, anchor) == pytest.approx(want, rel=1e-4, abs=1e-9)


def test_detail_spans_and_monotone_flag():
    r = bd_metrics(shift(ANCHOR, -0.5, 1.0), ANCHOR)
    assert r.log2_rate_overlap == pytest.approx((math.log2(500), math.log2(8000) - 0.5))
    assert r.quality_overlap == pytest.approx((41.0, 85.0))
    assert r.monotone_fit


# -- closeness -------------------------------------------------------------------------

def test_closeness_identity():
    ref = {"a": (-20.0, 4.0), "b": (-5.0, 1.0)}
    c = closeness(ref, ref)
    assert (c.f25, c.f50, c.f75, c.n) == (1.0, 1.0, 1.0, 2)


def test_closeness_single_video_arithmetic():
    c = closeness({"a": (-16.0, 3.2)}, {"a": (-20.0, 4.0)})
    assert c.f75 == 1.0
    c = closeness({"a": (-14.0, 3.2)}, {"a": (-20.0, 4.0)})
    assert (c.f50, c.f75) == (1.0, 0.0)


def test_closeness_scaled_method():
    rng = np.random.default_rng(0)
    ref = {f"v{i}": (-float(rng.uniform(5, 40)), float(rng.uniform(0.5, 8))) for i in range(30)}
    method = {k: (0.6 * r, 0.6 * q) for k, (r, q) in ref.items()}
    c = closeness(method, ref)
    assert (c.f25, c.f50, c.f75) == (1.0, 1.0, 0.0)


def test_closeness_errors():
    with pytest.raises(ValueError):
        closeness({"a": (0, 0)}, {"b": (0, 0)})
    with pytest.raises(ValueError):
        closeness({}, {})


def test_report_csv(tmp_path):
    a = bd_metrics(shift(ANCHOR, -0.2, 1.0), ANCHOR)
    b = bd_metrics(shift(ANCHOR, -0.4, 2.0), ANCHOR)
    rows = [BdReportRow("v1", a, b), BdReportRow("v2", b, a), BdReportRow("v3", None, None, "bd undefined")]
    report = BdReport(rows)
    s = report.summary()
    assert s["vs_fixed.bd_rate"][0] == pytest.approx((a.bd_rate + b.bd_rate) / 2)
    assert pair_map(rows) == {"v1": (a.bd_rate, a.bd_quality), "v2": (b.bd_rate, b.bd_quality)}
    p = tmp_path / "r.csv"
    report.write_csv(p, closeness(pair_map(rows), pair_map(rows, "vs_reference")))
    lines = list(csv.reader(p.open()))
    assert lines[0][:3] == ["video_id", "bd_rate_vs_fixed", "bd_vmaf_vs_fixed"]
    assert [r[0] for r in lines[1:]] == ["v1", "v2", "v3", "mean", "std", "f25", "f50", "f75"]
    assert lines[3][1] == "" and lines[3][5] == "bd undefined"
