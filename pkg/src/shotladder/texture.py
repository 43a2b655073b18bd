"""Low-level content features: GLCM, temporal coherence, SI/TI, colour and DCT energy.

All sample planes are rescaled to an 8-bit range first so that 8- and 10-bit
sources produce comparable feature values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.fft import dctn

from .media import SPATIAL_STATS, TEMPORAL_STATS, VideoClip, pool_spatial, pool_temporal
from .vector import LOG_FLOOR, PLANES, FeatureVector, bitrate_dct, config_hash, dct_log_ratio, vmaf_dct

GLCM_PROPS = ("correlation", "contrast", "energy", "homogeneity")
GLCM_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))
LLF_LENGTHS = {1: 93, 2: 96, 3: 96}
CHROMA_WEIGHT = 5.0


@dataclass(frozen=True)
class TextureConfig:
    glcm_levels: int = 64
    glcm_block: int = 64
    glcm_offsets: tuple[tuple[int, int], ...] = GLCM_OFFSETS
    tc_block: int = 64
    tc_eps: float = 1e-6
    dct_block: int = 32
    log_floor: float = LOG_FLOOR

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class DctTexture:
    # one entry per plane (Y, U, V)
    E: tuple[float, float, float]
    h: tuple[float, float, float]
    L: tuple[float, float, float]

    def log_ratios(self, floor: float = LOG_FLOOR) -> tuple[float, ...]:
        return tuple(dct_log_ratio(h, e, floor) for h, e in zip(self.h, self.E))

    def bitrate_features(self, bitrate_kbps: float, floor: float = LOG_FLOOR) -> list[float]:
        return [bitrate_dct(r, bitrate_kbps) for r in self.log_ratios(floor)]

    def quality_features(self, quality: float, floor: float = LOG_FLOOR) -> list[float]:
        return [vmaf_dct(r, quality) for r in self.log_ratios(floor)]


def _to_8bit(x: np.ndarray, bit_depth: int) -> np.ndarray:
    return x / 2.0 ** (bit_depth - 8) if bit_depth != 8 else x


def _blocks(plane: np.ndarray, size: int) -> np.ndarray:
    """Non-overlapping ``size x size`` tiles; partial edge tiles are dropped."""
    h, w = plane.shape
    nh, nw = h // size, w // size
    if nh == 0 or nw == 0:
        raise ValueError(f"plane {plane.shape} is smaller than one {size}x{size} block")
    x = plane[: nh * size, : nw * size]
    return x.reshape(nh, size, nw, size).swapaxes(1, 2).reshape(nh * nw, size, size)


def quantize(luma: np.ndarray, bit_depth: int, levels: int = 64) -> np.ndarray:
    shift = bit_depth - int(np.log2(levels))
    q = np.floor(luma / 2.0 ** shift) if shift > 0 else np.floor(luma * 2.0 ** -shift)
    return np.clip(q, 0, levels - 1).astype(np.int64)


def glcm_matrices(blocks: np.ndarray, levels: int, offsets=GLCM_OFFSETS) -> np.ndarray:
    """Symmetric, normalised co-occurrence matrices averaged over ``offsets``.

    ``blocks`` is an integer array ``(B, h, w)`` of gray levels; returns ``(B, L, L)``.
    """
    blocks = np.asarray(blocks)
    if blocks.ndim == 2:
        blocks = blocks[None]
    nb, bh, bw = blocks.shape
    base = (np.arange(nb) * levels * levels)[:, None, None]
    acc = np.zeros((nb, levels, levels))
    for dr, dc in offsets:
        r0, r1 = max(0, -dr), bh - max(0, dr)
        c0, c1 = max(0, -dc), bw - max(0, dc)
        a = blocks[:, r0:r1, c0:c1]
        b = blocks[:, r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        idx = (base + a * levels + b).ravel()
        counts = np.bincount(idx, minlength=nb * levels * levels).reshape(nb, levels, levels).astype(np.float64)
        counts += counts.transpose(0, 2, 1)
        acc += counts / counts.sum(axis=(1, 2), keepdims=True)
    return acc / len(offsets)


def glcm_properties(p: np.ndarray) -> dict[str, np.ndarray]:
    """Correlation, contrast, energy and homogeneity of ``(B, L, L)`` matrices.

    Correlation of a matrix with zero marginal variance is 0.
    """
    levels = p.shape[-1]
    i = np.arange(levels, dtype=np.float64)[:, None]
    j = np.arange(levels, dtype=np.float64)[None, :]
    diff2 = (i - j) ** 2
    mu_i = (p * i).sum(axis=(1, 2))
    mu_j = (p * j).sum(axis=(1, 2))
    var_i = (p * (i - mu_i[:, None, None]) ** 2).sum(axis=(1, 2))
    var_j = (p * (j - mu_j[:, None, None]) ** 2).sum(axis=(1, 2))
    cov = (p * (i - mu_i[:, None, None]) * (j - mu_j[:, None, None])).sum(axis=(1, 2))
    denom = np.sqrt(var_i * var_j)
    ok = denom > 1e-15
    corr = np.zeros_like(cov)
    corr[ok] = np.clip(cov[ok] / denom[ok], -1.0, 1.0)
    return {
        "correlation": corr,
        "contrast": (p * diff2).sum(axis=(1, 2)),
        "energy": np.sqrt((p ** 2).sum(axis=(1, 2))),
        "homogeneity": (p / (1.0 + diff2)).sum(axis=(1, 2)),
    }


def _nested(per_frame: list[dict], spatial, temporal, prefix: str) -> tuple[list[str], list[float]]:
    names, values = [], []
    for s in spatial:
        pooled = pool_temporal([fr[s] for fr in per_frame], temporal)
        for t in temporal:
            names.append(f"{prefix}_{s}_{t}")
            values.append(pooled[t])
    return names, values


def glcm_features(clip: VideoClip, config: TextureConfig = TextureConfig()):
    """32 GLCM statistics: 4 properties x {mean, std} over blocks x 4 moments over frames."""
    per_prop = {p: [] for p in GLCM_PROPS}
    for f in clip.frames:
        q = quantize(f.luma, clip.bit_depth, config.glcm_levels)
        mats = glcm_matrices(_blocks(q, config.glcm_block), config.glcm_levels, config.glcm_offsets)
        props = glcm_properties(mats)
        for p in GLCM_PROPS:
            per_prop[p].append(pool_spatial(props[p], SPATIAL_STATS))
    names, values = [], []
    for p in GLCM_PROPS:
        n, v = _nested(per_prop[p], SPATIAL_STATS, TEMPORAL_STATS, f"glcm_{p}")
        names += n
        values += v
    return names, values


def block_coherence(prev: np.ndarray, cur: np.ndarray, block: int = 64, eps: float = 1e-6) -> np.ndarray:
    """Per-block ``var(cur - prev) / (var(cur) + var(prev) + eps)``."""
    bp, bc = _blocks(prev, block), _blocks(cur, block)
    return (bc - bp).var(axis=(1, 2)) / (bc.var(axis=(1, 2)) + bp.var(axis=(1, 2)) + eps)


def temporal_coherence(clip: VideoClip, config: TextureConfig = TextureConfig()):
    """8 values: 4 block moments of coherence x {mean, std} over frame pairs."""
    if clip.n_frames < 2:
        raise ValueError("temporal coherence needs at least 2 frames")
    luma = [_to_8bit(f.luma, clip.bit_depth) for f in clip.frames]
    per_pair = [pool_temporal(block_coherence(a, b, config.tc_block, config.tc_eps), TEMPORAL_STATS)
                for a, b in zip(luma[:-1], luma[1:])]
    return _nested(per_pair, TEMPORAL_STATS, SPATIAL_STATS, "tc")


def sobel_magnitude(plane: np.ndarray) -> np.ndarray:
    return np.hypot(ndimage.sobel(plane, axis=0), ndimage.sobel(plane, axis=1))


def upsample_chroma(plane: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)[: shape[0], : shape[1]]


def colorfulness(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """Hasler-Suesstrunk colourfulness of an 8-bit-range YUV frame (BT.709 matrix)."""
    u = upsample_chroma(u, y.shape) - 128.0
    v = upsample_chroma(v, y.shape) - 128.0
    r = y + 1.5748 * v
    g = y - 0.1873 * u - 0.4681 * v
    b = y + 1.8556 * u
    rg = r - g
    yb = 0.5 * (r + g) - b
    return float(np.hypot(rg.std(), yb.std()) + 0.3 * np.hypot(rg.mean(), yb.mean()))


def si_ti_cti_cf_ci(clip: VideoClip):
    """44 values: SI (8), TI (8), CTI (8), CF (4) and CI (16)."""
    if clip.n_frames < 2:
        raise ValueError("TI needs at least 2 frames")
    bd = clip.bit_depth
    ys = [_to_8bit(f.luma, bd) for f in clip.frames]
    us = [_to_8bit(f.chroma_u, bd) for f in clip.frames]
    vs = [_to_8bit(f.chroma_v, bd) for f in clip.frames]

    names, values = [], []

    def add(block):
        names.extend(block[0])
        values.extend(block[1])

    add(_nested([pool_spatial(sobel_magnitude(y)) for y in ys], SPATIAL_STATS, TEMPORAL_STATS, "si"))
    add(_nested([pool_spatial(b - a) for a, b in zip(ys[:-1], ys[1:])], SPATIAL_STATS, TEMPORAL_STATS, "ti"))
    add(_nested([pool_spatial(y) for y in ys], SPATIAL_STATS, TEMPORAL_STATS, "cti"))
    cf = pool_temporal([colorfulness(y, u, v) for y, u, v in zip(ys, us, vs)], TEMPORAL_STATS)
    add(([f"cf_{t}" for t in TEMPORAL_STATS], [cf[t] for t in TEMPORAL_STATS]))
    add(_nested([pool_spatial(u) for u in us], SPATIAL_STATS, TEMPORAL_STATS, "ci_u"))
    weighted_v = [{k: CHROMA_WEIGHT * x for k, x in pool_spatial(v).items()} for v in vs]
    add(_nested(weighted_v, SPATIAL_STATS, TEMPORAL_STATS, "ci_v"))
    return names, values


def _dct_blocks(plane: np.ndarray, size: int) -> np.ndarray:
    return dctn(_blocks(plane, size), type=2, axes=(1, 2), norm="ortho")


def dct_texture(clip: VideoClip, config: TextureConfig = TextureConfig()) -> DctTexture:
    """Spatial (E), temporal (h) and luminescence (L) DCT energies per plane.

    Luma uses ``dct_block``-sized tiles, chroma half that so tiles stay
    co-sited under 4:2:0. E is the mean magnitude of AC coefficients, h the
    mean magnitude of the coefficient change between co-located tiles of
    consecutive frames, L the mean square root of the DC coefficient.
    """
    if clip.n_frames < 2:
        raise ValueError("temporal DCT energy needs at least 2 frames")
    E, h, L = [], [], []
    for p in range(3):
        size = config.dct_block if p == 0 else config.dct_block // 2
        coeffs = [_dct_blocks(_to_8bit(f.planes()[p], clip.bit_depth), size) for f in clip.frames]
        e_frames, l_frames = [], []
        for c in coeffs:
            ac = np.abs(c).sum(axis=(1, 2)) - np.abs(c[:, 0, 0])
            e_frames.append(ac.sum() / (c.shape[0] * (size * size - 1)))
            l_frames.append(np.sqrt(np.clip(c[:, 0, 0], 0.0, None)).mean())
        h_frames = [np.abs(b - a).mean() for a, b in zip(coeffs[:-1], coeffs[1:])]
        E.append(float(np.mean(e_frames)))
        h.append(float(np.mean(h_frames)))
        L.append(float(np.mean(l_frames)))
    return DctTexture(tuple(E), tuple(h), tuple(L))


def dct_names() -> list[str]:
    return [f"dct_{kind}_{p}" for p in PLANES for kind in ("E", "h", "L")]


def dct_values(t: DctTexture) -> list[float]:
    return [v for i in range(3) for v in (t.E[i], t.h[i], t.L[i])]


def extract_llf(clip: VideoClip, set_id: int, bitrate: float | None = None, quality: float | None = None,
                config: TextureConfig = TextureConfig(), resolve_required: bool = True) -> FeatureVector:
    """Low-level feature set 1, 2 or 3.

    Set 2 appends three bitrate-coupled DCT features and set 3 three
    quality-coupled ones. With ``resolve_required=False`` the coupled slots
    are left as NaN when the bitrate/quality is not given; they are filled
    per encode by :meth:`FeatureVector.resolve`.
    """
    if set_id not in LLF_LENGTHS:
        raise ValueError(f"low-level feature set must be 1, 2 or 3, got {set_id}")
    if resolve_required and set_id == 2 and bitrate is None:
        raise ValueError("LLF2 needs a bitrate")
    if resolve_required and set_id == 3 and quality is None:
        raise ValueError("LLF3 needs a quality score")

    names, values = [], []
    for n, v in (glcm_features(clip, config), temporal_coherence(clip, config), si_ti_cti_cf_ci(clip)):
        names += n
        values += v
    dct = dct_texture(clip, config)
    names += dct_names()
    values += dct_values(dct)

    coupling, slots, ratios = None, (), ()
    if set_id in (2, 3):
        ratios = dct.log_ratios(config.log_floor)
        slots = tuple(range(len(values), len(values) + 3))
        if set_id == 2:
            coupling = "bitrate"
            names += [f"bitrate_dct_{p}" for p in PLANES]
            values += dct.bitrate_features(bitrate, config.log_floor) if bitrate else [np.nan] * 3
        else:
            coupling = "quality"
            names += [f"vmaf_dct_{p}" for p in PLANES]
            values += dct.quality_features(quality, config.log_floor) if quality is not None else [np.nan] * 3
    return FeatureVector(f"llf{set_id}", tuple(names), np.asarray(values, dtype=np.float64), coupling,
                         slots, ratios, config_hash({"llf": set_id, **config.as_dict()}))
