"""Visual-information features from a Gaussian scale mixture wavelet model.

Each luma plane (and optionally each frame-difference plane) is split by a
recursive orthonormal Haar transform into four scales with two detail
subbands per scale. Every subband is modelled as a GSM over overlapping 3x3
neighbourhoods; the information carried along each eigenvector of the
neighbourhood covariance gives one feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .media import VideoClip, luma_differences

N_SCALES = 4
N_SUBBANDS = 2
PATCH = 3
PATCH_DIM = PATCH * PATCH
MIN_PLANE = PATCH * 2 ** N_SCALES  # 48: a scale-4 subband still holds one patch

SUBBAND_NAMES = ("hdetail", "vdetail")
VIFF_LENGTHS = {1: 4, 2: 8, 3: 72, 4: 5, 5: 9, 6: 73, 7: 9, 8: 17, 9: 145}


@dataclass(frozen=True)
class VifConfig:
    sigma_n_sq: float = 0.1
    scales: int = N_SCALES
    patch: int = PATCH
    # Samples are rescaled to an 8-bit range before the transform so that
    # sigma_n_sq means the same thing for 8- and 10-bit sources.
    normalize_to_8bit: bool = True

    def __post_init__(self):
        if not self.sigma_n_sq > 0:
            raise ValueError("sigma_n_sq must be positive")
        if self.scales != N_SCALES or self.patch != PATCH:
            raise ValueError("only 4 scales of 3x3 patches are supported")


@dataclass(frozen=True)
class SubbandPyramid:
    # bands[k][b]: scale k (0 = finest), subband b (0 = horizontal detail, 1 = vertical detail)
    bands: tuple[tuple[np.ndarray, np.ndarray], ...]

    def shapes(self) -> list[tuple[int, int]]:
        return [b[0].shape for b in self.bands]


@dataclass(frozen=True)
class GsmFit:
    eigenvalues: np.ndarray  # descending, clamped at 0
    s_sq: np.ndarray         # one multiplier per patch
    patch_dim: int = PATCH_DIM

    @property
    def n_patches(self) -> int:
        return int(self.s_sq.size)


def haar_step(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One level of the orthonormal 2-D Haar analysis.

    Returns ``(approximation, horizontal_detail, vertical_detail)``. The
    horizontal-detail band is high-pass across rows (responds to horizontal
    edges), the vertical-detail band is high-pass across columns. The diagonal
    band is not computed. Odd trailing rows/columns are dropped.
    """
    h, w = plane.shape
    x = plane[: h - h % 2, : w - w % 2]
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    approx = (a + b + c + d) / 2.0
    hdetail = (a + b - c - d) / 2.0
    vdetail = (a - b + c - d) / 2.0
    return approx, hdetail, vdetail


def wavelet_decompose(plane, config: VifConfig = VifConfig()) -> SubbandPyramid:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or min(plane.shape) < MIN_PLANE:
        raise ValueError(f"plane must be at least {MIN_PLANE}x{MIN_PLANE}, got {plane.shape}")
    bands = []
    approx = plane
    for _ in range(config.scales):
        approx, hd, vd = haar_step(approx)
        bands.append((hd, vd))
    return SubbandPyramid(tuple(bands))


def patch_vectors(subband: np.ndarray, patch: int = PATCH) -> np.ndarray:
    """Overlapping ``patch x patch`` neighbourhoods as rows of an (N, patch^2) matrix."""
    win = sliding_window_view(subband, (patch, patch))
    return win.reshape(-1, patch * patch)


def fit_gsm(subband, config: VifConfig = VifConfig()) -> GsmFit:
    """Estimate the neighbourhood covariance and per-patch GSM multipliers.

    ``s_i^2 = c_i^T C^+ c_i / M`` with ``C^+`` the pseudo-inverse of the
    sample covariance, so rank-deficient subbands (flat areas) stay finite.
    """
    subband = np.asarray(subband, dtype=np.float64)
    if subband.ndim != 2 or min(subband.shape) < config.patch:
        raise ValueError(f"subband {subband.shape} is smaller than one {config.patch}x{config.patch} patch")
    m = config.patch ** 2
    c = patch_vectors(subband - subband.mean(), config.patch)
    n = c.shape[0]
    cov = c.T @ c / n
    cov = (cov + cov.T) / 2.0
    lam, vecs = np.linalg.eigh(cov)
    order = np.argsort(lam)[::-1]
    lam, vecs = lam[order], vecs[:, order]
    tol = max(lam.max(initial=0.0), 0.0) * m * np.finfo(np.float64).eps
    keep = lam > tol
    proj = c @ vecs[:, keep]
    s_sq = (proj ** 2 / lam[keep]).sum(axis=1) / m if keep.any() else np.zeros(n)
    return GsmFit(np.clip(lam, 0.0, None), np.clip(s_sq, 0.0, None), m)


def vif_mutual_info(fit: GsmFit, config: VifConfig = VifConfig()) -> np.ndarray:
    """Per-eigenvector information ``mean_i log2(1 + s_i^2 lambda_j / sigma_n^2)``.

    Summing the returned vector gives the subband total.
    """
    snr = np.outer(fit.s_sq, fit.eigenvalues) / config.sigma_n_sq
    return np.log2(1.0 + snr).mean(axis=0)


def plane_information(plane, config: VifConfig = VifConfig()) -> np.ndarray:
    """Information along every eigenvector of every subband: shape (scales, 2, 9)."""
    pyr = wavelet_decompose(plane, config)
    out = np.empty((config.scales, N_SUBBANDS, config.patch ** 2))
    for k, pair in enumerate(pyr.bands):
        for b, band in enumerate(pair):
            out[k, b] = vif_mutual_info(fit_gsm(band, config), config)
    return out


def aggregate(info: np.ndarray, level: str) -> np.ndarray:
    """Collapse a (scales, 2, 9) information array to one feature granularity.

    ``eig`` keeps every value, ``subband`` sums over eigenvectors, ``scale``
    additionally averages the two subbands.
    """
    if level == "eig":
        return info.reshape(-1)
    per_band = info.sum(axis=2)
    if level == "subband":
        return per_band.reshape(-1)
    if level == "scale":
        return 0.5 * per_band.sum(axis=1)
    raise ValueError(f"unknown aggregation level {level!r}")


def _names(prefix: str, level: str, scales: int = N_SCALES) -> list[str]:
    if level == "eig":
        return [f"{prefix}_k{k + 1}_{SUBBAND_NAMES[b]}_j{j + 1}"
                for k in range(scales) for b in range(N_SUBBANDS) for j in range(PATCH_DIM)]
    if level == "subband":
        return [f"{prefix}_k{k + 1}_{SUBBAND_NAMES[b]}" for k in range(scales) for b in range(N_SUBBANDS)]
    return [f"{prefix}_k{k + 1}" for k in range(scales)]


# set id -> (aggregation level, mean |D| included, difference-plane features included)
_VIFF_LAYOUT = {
    1: ("scale", False, False), 2: ("subband", False, False), 3: ("eig", False, False),
    4: ("scale", True, False), 5: ("subband", True, False), 6: ("eig", True, False),
    7: ("scale", True, True), 8: ("subband", True, True), 9: ("eig", True, True),
}


def viff_names(set_id: int) -> list[str]:
    level, with_abs, with_diff = _VIFF_LAYOUT[set_id]
    names = _names("vif_frame", level)
    if with_abs:
        names.append("mean_abs_luma_diff")
    if with_diff:
        names += _names("vif_diff", level)
    return names


def _to_8bit(plane: np.ndarray, clip: VideoClip, config: VifConfig) -> np.ndarray:
    if config.normalize_to_8bit and clip.bit_depth != 8:
        return plane / 2.0 ** (clip.bit_depth - 8)
    return plane


def extract_viff(clip: VideoClip, set_id: int, config: VifConfig = VifConfig()):
    """Temporally averaged VIF features of one of the nine feature sets.

    Returns ``(names, values)``; see :func:`viff_names` for the order.
    """
    if set_id not in _VIFF_LAYOUT:
        raise ValueError(f"VIF feature set must be 1..9, got {set_id}")
    level, with_abs, with_diff = _VIFF_LAYOUT[set_id]
    if (with_abs or with_diff) and clip.n_frames < 2:
        raise ValueError(f"VIFF{set_id} needs at least 2 frames")

    frame_info = np.mean([plane_information(_to_8bit(f.luma, clip, config), config)
                          for f in clip.frames], axis=0)
    values = list(aggregate(frame_info, level))
    if with_abs or with_diff:
        diffs = luma_differences(clip)
        if with_abs:
            scale = 2.0 ** (clip.bit_depth - 8) if config.normalize_to_8bit else 1.0
            values.append(float(np.mean(diffs.mean_abs)) / scale)
        if with_diff:
            diff_info = np.mean([plane_information(_to_8bit(d, clip, config), config)
                                 for d in diffs.planes], axis=0)
            values += list(aggregate(diff_info, level))
    return viff_names(set_id), np.asarray(values, dtype=np.float64)
