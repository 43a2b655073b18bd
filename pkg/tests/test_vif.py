import math

import numpy as np
import pytest

from shotladder.media import VideoClip
from shotladder.vif import (GsmFit, VIFF_LENGTHS, VifConfig, aggregate, extract_viff, fit_gsm, haar_step,
                            patch_vectors, plane_information, vif_mutual_info, viff_names,
                            wavelet_decompose)

from conftest import make_clip


def _haar_loop(x):
    h, w = x.shape[0] // 2, x.shape[1] // 2
    a, hd, vd = np.zeros((h, w)), np.zeros((h, w)), np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            p, q = x[2 * i, 2 * j], x[2 * i, 2 * j + 1]
            r, s = x[2 * i + 1, 2 * j], x[2 * i + 1, 2 * j + 1]
            a[i, j] = (p + q + r + s) / 2
            hd[i, j] = (p + q - r - s) / 2
            vd[i, j] = (p - q + r - s) / 2
    return a, hd, vd


def test_haar_matches_loop():
    x = np.random.default_rng(0).normal(size=(10, 14))
    for got, want in zip(haar_step(x), _haar_loop(x)):
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_haar_drops_odd_edge():
    a, _, _ = haar_step(np.ones((7, 9)))
    assert a.shape == (3, 4)
    np.testing.assert_allclose(a, 2.0)


def test_haar_energy_bound():
    x = np.random.default_rng(1).normal(size=(16, 16))
    a, hd, vd = haar_step(x)
    assert (a ** 2).sum() + (hd ** 2).sum() + (vd ** 2).sum() <= (x ** 2).sum() + 1e-9


def test_haar_edge_orientation():
    # change across columns between 2j and 2j+1 -> only the vertical-detail band responds
    x = np.zeros((8, 8))
    x[:, 5:] = 10.0
    _, hd, vd = haar_step(x)
    assert np.abs(hd).max() == 0
    assert np.abs(vd).max() > 0
    _, hd, vd = haar_step(x.T)
    assert np.abs(vd).max() == 0
    assert np.abs(hd).max() > 0


def test_decompose_shapes_and_minimum():
    pyr = wavelet_decompose(np.zeros((64, 96)))
    assert pyr.shapes() == [(32, 48), (16, 24), (8, 12), (4, 6)]
    with pytest.raises(ValueError):
        wavelet_decompose(np.zeros((40, 64)))


def _gsm_oracle(band, m=9):
    band = band - band.mean()
    rows = []
    for i in range(band.shape[0] - 2):
        for j in range(band.shape[1] - 2):
            rows.append(band[i:i + 3, j:j + 3].ravel())
    c = np.array(rows)
    cov = c.T @ c / len(c)
    lam = np.sort(np.linalg.eigvalsh(cov))[::-1]
    s_sq = np.einsum("ij,jk,ik->i", c, np.linalg.pinv(cov, hermitian=True), c) / m
    return lam, s_sq


def test_fit_gsm_matches_explicit_oracle():
    band = np.random.default_rng(2).normal(size=(12, 11)) * 3 + 1
    fit = fit_gsm(band)
    lam, s_sq = _gsm_oracle(band)
    np.testing.assert_allclose(fit.eigenvalues, lam, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(fit.s_sq, s_sq, rtol=1e-7, atol=1e-10)
    assert np.all(np.diff(fit.eigenvalues) <= 0)


def test_fit_gsm_flat_band_is_zero():
    fit = fit_gsm(np.full((8, 8), 5.0))
    assert np.all(fit.eigenvalues == 0) and np.all(fit.s_sq == 0)
    np.testing.assert_array_equal(vif_mutual_info(fit), np.zeros(9))


def test_patch_vectors_count():
    assert patch_vectors(np.zeros((5, 7))).shape == (15, 9)


def test_mutual_info_matches_double_loop():
    rng = np.random.default_rng(3)
    fit = GsmFit(np.sort(rng.uniform(0, 5, 9))[::-1], rng.uniform(0, 2, 40))
    cfg = VifConfig(sigma_n_sq=0.3)
    want = [sum(math.log2(1 + s * l / 0.3) for s in fit.s_sq) / 40 for l in fit.eigenvalues]
    np.testing.assert_allclose(vif_mutual_info(fit, cfg), want, rtol=1e-12)


def test_uniform_unit_snr_gives_one_bit_per_eigenvector():
    fit = GsmFit(np.full(9, 0.1), np.ones(25))
    info = vif_mutual_info(fit, VifConfig(sigma_n_sq=0.1))
    np.testing.assert_allclose(info, 1.0)
    assert info.sum() == pytest.approx(9.0, abs=1e-12)


def test_aggregate_levels():
    info = np.random.default_rng(4).uniform(size=(4, 2, 9))
    assert aggregate(info, "eig").shape == (72,)
    sub = aggregate(info, "subband")
    np.testing.assert_allclose(sub.reshape(4, 2), info.sum(axis=2))
    np.testing.assert_allclose(aggregate(info, "scale"), 0.5 * info.sum(axis=2).sum(axis=1))
    with pytest.raises(ValueError):
        aggregate(info, "pixel")


@pytest.mark.parametrize("set_id", sorted(VIFF_LENGTHS))
def test_viff_lengths_and_names(set_id):
    clip = make_clip(64, 64, 3, seed=set_id)
    names, values = extract_viff(clip, set_id)
    assert len(names) == len(values) == VIFF_LENGTHS[set_id]
    assert names == viff_names(set_id)
    assert np.all(np.isfinite(values)) and np.all(values >= 0)


def test_viff_set_consistency():
    clip = make_clip(64, 64, 3, seed=9)
    _, v3 = extract_viff(clip, 3)
    _, v2 = extract_viff(clip, 2)
    _, v1 = extract_viff(clip, 1)
    np.testing.assert_allclose(v2, v3.reshape(8, 9).sum(axis=1), rtol=1e-12)
    np.testing.assert_allclose(v1, 0.5 * v2.reshape(4, 2).sum(axis=1), rtol=1e-12)
    _, v7 = extract_viff(clip, 7)
    np.testing.assert_allclose(v7[:4], v1)
    _, v4 = extract_viff(clip, 4)
    np.testing.assert_allclose(v7[:5], v4)


def test_viff_mean_abs_diff_slot():
    clip = make_clip(64, 64, 3, seed=5)
    _, v4 = extract_viff(clip, 4)
    luma = clip.luma_stack()
    assert v4[4] == pytest.approx(np.abs(np.diff(luma, axis=0)).mean())


def test_ten_bit_normalised_like_eight_bit():
    c8 = make_clip(64, 64, 2, seed=6)
    c10 = VideoClip.from_arrays(c8.luma_stack() * 4, c8.plane_stack(1) * 4, c8.plane_stack(2) * 4, bit_depth=10)
    np.testing.assert_allclose(extract_viff(c8, 7)[1], extract_viff(c10, 7)[1], rtol=1e-9)


def test_static_clip_difference_features_vanish():
    c = make_clip(64, 64, 3, seed=7, motion=0)
    _, v7 = extract_viff(c, 7)
    assert v7[4] == 0
    np.testing.assert_array_equal(v7[5:], 0)


def test_single_frame_sets():
    c = make_clip(64, 64, 1)
    assert len(extract_viff(c, 3)[1]) == 72
    with pytest.raises(ValueError):
        extract_viff(c, 4)
    with pytest.raises(ValueError):
        extract_viff(c, 10)


def test_plane_information_shape():
    assert plane_information(np.random.default_rng(0).normal(size=(48, 48))).shape == (4, 2, 9)
