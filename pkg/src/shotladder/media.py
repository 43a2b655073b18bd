"""Raw video decoding and statistical pooling shared by the feature extractors.

Only YUV4MPEG2 (``.y4m``) with 4:2:0 chroma is supported. Samples are held as
``float64`` arrays after decode, which represents every integer up to 16 bits
exactly.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np

Y4M_MAGIC = b"YUV4MPEG2"
FRAME_TAG = b"FRAME"

SPATIAL_STATS = ("mean", "std")
TEMPORAL_STATS = ("mean", "std", "skew", "kurtosis")

# Y4M colorspace tag -> bit depth. Only 4:2:0 layouts are accepted.
_CHROMA_TAGS = {
    "420": 8,
    "420jpeg": 8,
    "420paldv": 8,
    "420mpeg2": 8,
    "420p10": 10,
    "420p12": 12,
}


class Y4MError(ValueError):
    """Malformed or unsupported YUV4MPEG2 input."""


@dataclass(frozen=True)
class Frame:
    luma: np.ndarray
    chroma_u: np.ndarray
    chroma_v: np.ndarray

    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.luma, self.chroma_u, self.chroma_v


@dataclass(frozen=True)
class VideoClip:
    width: int
    height: int
    bit_depth: int
    frames: tuple[Frame, ...]
    frame_rate: float = 0.0
    subsampling: str = "420"

    def __post_init__(self):
        if self.subsampling != "420":
            raise Y4MError(f"unsupported chroma subsampling {self.subsampling!r}")
        cw, ch = (self.width + 1) // 2, (self.height + 1) // 2
        hi = 2 ** self.bit_depth - 1
        for i, f in enumerate(self.frames):
            if f.luma.shape != (self.height, self.width):
                raise ValueError(f"frame {i}: luma shape {f.luma.shape} != {(self.height, self.width)}")
            if f.chroma_u.shape != (ch, cw) or f.chroma_v.shape != (ch, cw):
                raise ValueError(f"frame {i}: chroma planes must be {(ch, cw)}")
            for p in f.planes():
                if p.size and (p.min() < 0 or p.max() > hi):
                    raise ValueError(f"frame {i}: samples outside [0, {hi}]")

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def max_value(self) -> int:
        return 2 ** self.bit_depth - 1

    def luma_stack(self) -> np.ndarray:
        return np.stack([f.luma for f in self.frames])

    def plane_stack(self, index: int) -> np.ndarray:
        """Stack plane ``index`` (0=Y, 1=U, 2=V) across frames."""
        return np.stack([f.planes()[index] for f in self.frames])

    @classmethod
    def from_arrays(cls, luma, chroma_u, chroma_v, bit_depth=8, frame_rate=0.0) -> "VideoClip":
        """Build a clip from ``(T, H, W)`` luma and ``(T, H/2, W/2)`` chroma arrays."""
        luma = np.asarray(luma, dtype=np.float64)
        u = np.asarray(chroma_u, dtype=np.float64)
        v = np.asarray(chroma_v, dtype=np.float64)
        frames = tuple(Frame(luma[t], u[t], v[t]) for t in range(luma.shape[0]))
        return cls(luma.shape[2], luma.shape[1], bit_depth, frames, frame_rate)


def _parse_header(line: bytes) -> dict:
    tokens = line.split()
    if not tokens or tokens[0] != Y4M_MAGIC:
        raise Y4MError("stream does not begin with a YUV4MPEG2 header")
    hdr = {"C": "420jpeg", "F": "0:1"}
    for tok in tokens[1:]:
        key, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        hdr[key] = val
    if "W" not in hdr or "H" not in hdr:
        raise Y4MError("header lacks width/height")
    try:
        hdr["W"], hdr["H"] = int(hdr["W"]), int(hdr["H"])
    except ValueError as exc:
        raise Y4MError(f"bad dimensions in header: {exc}") from None
    if hdr["W"] <= 0 or hdr["H"] <= 0:
        raise Y4MError("non-positive dimensions in header")
    if hdr["C"] not in _CHROMA_TAGS:
        raise Y4MError(f"unsupported-subsampling: colorspace C{hdr['C']} (only 4:2:0 is accepted)")
    return hdr


def _frame_rate(tag: str) -> float:
    num, _, den = tag.partition(":")
    try:
        return float(num) / float(den) if float(den) else 0.0
    except ValueError:
        return 0.0


def read_y4m(stream: BinaryIO) -> VideoClip:
    """Decode every frame of a YUV4MPEG2 byte stream."""
    header = stream.readline()
    if not header.endswith(b"\n"):
        raise Y4MError("truncated header")
    hdr = _parse_header(header.rstrip(b"\n"))
    w, h = hdr["W"], hdr["H"]
    depth = _CHROMA_TAGS[hdr["C"]]
    dtype = np.dtype("<u2") if depth > 8 else np.dtype("u1")
    cw, ch = (w + 1) // 2, (h + 1) // 2
    n_luma, n_chroma = w * h, cw * ch
    frame_bytes = (n_luma + 2 * n_chroma) * dtype.itemsize

    frames = []
    while True:
        tag = stream.readline()
        if not tag:
            break
        if not tag.startswith(FRAME_TAG):
            raise Y4MError(f"frame {len(frames)}: expected FRAME marker")
        payload = stream.read(frame_bytes)
        if len(payload) != frame_bytes:
            raise Y4MError(f"frame {len(frames)}: truncated payload "
                           f"({len(payload)} of {frame_bytes} bytes)")
        samples = np.frombuffer(payload, dtype=dtype).astype(np.float64)
        y = samples[:n_luma].reshape(h, w)
        u = samples[n_luma:n_luma + n_chroma].reshape(ch, cw)
        v = samples[n_luma + n_chroma:].reshape(ch, cw)
        frames.append(Frame(y, u, v))
    if not frames:
        raise Y4MError("stream contains no frames")
    return VideoClip(w, h, depth, tuple(frames), _frame_rate(hdr["F"]))


def parse_y4m(data: bytes | BinaryIO) -> VideoClip:
    if isinstance(data, (bytes, bytearray)):
        data = io.BytesIO(data)
    return read_y4m(data)


def load_y4m(path: str | Path) -> VideoClip:
    with open(path, "rb") as fh:
        return read_y4m(fh)


def write_y4m(clip: VideoClip, stream: BinaryIO) -> None:
    colorspace = {8: "420jpeg", 10: "420p10", 12: "420p12"}.get(clip.bit_depth)
    if colorspace is None:
        raise Y4MError(f"cannot write bit depth {clip.bit_depth}")
    fps = clip.frame_rate or 25.0
    # Rational frame rate with millisecond precision.
    rate = f"{int(round(fps * 1000))}:1000"
    stream.write(f"YUV4MPEG2 W{clip.width} H{clip.height} F{rate} Ip A1:1 C{colorspace}\n".encode())
    dtype = np.dtype("<u2") if clip.bit_depth > 8 else np.dtype("u1")
    for f in clip.frames:
        stream.write(FRAME_TAG + b"\n")
        for plane in f.planes():
            stream.write(np.rint(plane).astype(dtype).tobytes())


def dump_y4m(clip: VideoClip) -> bytes:
    buf = io.BytesIO()
    write_y4m(clip, buf)
    return buf.getvalue()


def pool_spatial(values, stats: Iterable[str] = SPATIAL_STATS) -> dict[str, float]:
    """Population mean / standard deviation of a sample plane."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot pool an empty plane")
    out = {}
    for s in stats:
        if s == "mean":
            out[s] = float(x.mean())
        elif s == "std":
            out[s] = float(x.std())
        else:
            raise ValueError(f"unknown spatial statistic {s!r}")
    return out


def pool_temporal(values, stats: Iterable[str] = TEMPORAL_STATS) -> dict[str, float]:
    """Population moments of a per-frame series.

    Skewness is Fisher-Pearson, kurtosis is excess kurtosis. A series with
    zero spread gets skew = kurtosis = 0.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("cannot pool an empty series")
    mean = x.mean()
    centred = x - mean
    m2 = np.mean(centred ** 2)
    std = np.sqrt(m2)
    degenerate = std == 0 or std <= 1e-12 * max(abs(mean), 1.0)
    out = {}
    for s in stats:
        if s == "mean":
            out[s] = float(mean)
        elif s == "std":
            out[s] = float(std)
        elif s == "skew":
            out[s] = 0.0 if degenerate else float(np.mean(centred ** 3) / m2 ** 1.5)
        elif s == "kurtosis":
            out[s] = 0.0 if degenerate else float(np.mean(centred ** 4) / m2 ** 2 - 3.0)
        else:
            raise ValueError(f"unknown temporal statistic {s!r}")
    return out


def pool_nested(per_frame: Sequence[Mapping[str, float]] | np.ndarray,
                spatial: Sequence[str], temporal: Sequence[str]) -> list[float]:
    """Temporal pooling of already spatially pooled values.

    ``per_frame`` is a sequence of ``{spatial_stat: value}`` mappings. The
    output is ordered spatial-major: for each spatial stat, every temporal stat.
    """
    out = []
    for s in spatial:
        series = [fr[s] for fr in per_frame]
        pooled = pool_temporal(series, temporal)
        out.extend(pooled[t] for t in temporal)
    return out


@dataclass(frozen=True)
class LumaDifferences:
    planes: tuple[np.ndarray, ...]
    mean_abs: tuple[float, ...] = field(default=())


def luma_differences(clip: VideoClip) -> LumaDifferences:
    """Signed differences of consecutive luma planes and their mean magnitude."""
    if clip.n_frames < 2:
        raise ValueError("luma differences need at least 2 frames")
    luma = clip.luma_stack()
    diffs = np.diff(luma, axis=0)
    return LumaDifferences(tuple(diffs), tuple(float(np.abs(d).mean()) for d in diffs))
