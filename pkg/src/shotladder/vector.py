"""Named feature vectors and their on-disk form."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOG_FLOOR = -60.0
PLANES = ("Y", "U", "V")


def dct_log_ratio(h: float, e: float, floor: float = LOG_FLOOR) -> float:
    """``log2(sqrt(h / e))`` bounded to ``[floor, -floor]``.

    Zero temporal energy maps to ``floor``; zero spatial energy with motion
    maps to ``-floor``.
    """
    if h <= 0:
        return floor
    if e <= 0:
        return -floor
    return min(max(0.5 * math.log2(h / e), floor), -floor)


def bitrate_dct(log_ratio: float, bitrate_kbps: float) -> float:
    return log_ratio + 2.0 * math.log2(bitrate_kbps)


def vmaf_dct(log_ratio: float, quality: float) -> float:
    return 0.5 * (quality - log_ratio)


@dataclass(frozen=True)
class FeatureVector:
    """Ordered, named content features of one clip.

    Bitrate- or quality-coupled DCT features depend on the encode being
    described, so their slots are recomputed by :meth:`resolve` from the
    stored per-plane log energy ratios.
    """

    set_id: str
    names: tuple[str, ...]
    values: np.ndarray
    coupling: str | None = None
    coupled_slots: tuple[int, ...] = ()
    dct_log_ratios: tuple[float, ...] = ()
    config_hash: str = ""
    video_id: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != self.values.size:
            raise ValueError(f"{len(self.names)} names for {self.values.size} values")
        if self.coupling not in (None, "bitrate", "quality"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.coupling and len(self.coupled_slots) != len(self.dct_log_ratios):
            raise ValueError("coupled slots and log ratios must pair up")

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.set_id == other.set_id and self.names == other.names
                and np.array_equal(self.values, other.values, equal_nan=True)
                and self.coupling == other.coupling and self.coupled_slots == other.coupled_slots
                and self.dct_log_ratios == other.dct_log_ratios and self.config_hash == other.config_hash
                and self.video_id == other.video_id)

    __hash__ = None

    def resolve(self, bitrate: float | None = None, quality: float | None = None) -> np.ndarray:
        """Values with coupled slots evaluated at ``bitrate`` (kbps) or ``quality``."""
        if self.coupling is None:
            return self.values.copy()
        out = self.values.copy()
        if self.coupling == "bitrate":
            if bitrate is None:
                if np.isnan(out[list(self.coupled_slots)]).any():
                    raise ValueError(f"{self.set_id} needs a bitrate")
                return out
            for slot, r in zip(self.coupled_slots, self.dct_log_ratios):
                out[slot] = bitrate_dct(r, bitrate)
        else:
            if quality is None:
                if np.isnan(out[list(self.coupled_slots)]).any():
                    raise ValueError(f"{self.set_id} needs a quality score")
                return out
            for slot, r in zip(self.coupled_slots, self.dct_log_ratios):
                out[slot] = vmaf_dct(r, quality)
        return out

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        if self.coupling and other.coupling and self.coupling != other.coupling:
            raise ValueError("cannot combine bitrate- and quality-coupled vectors")
        shift = len(self)
        return FeatureVector(
            set_id=f"{self.set_id}+{other.set_id}",
            names=self.names + other.names,
            values=np.concatenate([self.values, other.values]),
            coupling=self.coupling or other.coupling,
            coupled_slots=self.coupled_slots + tuple(s + shift for s in other.coupled_slots),
            dct_log_ratios=self.dct_log_ratios + other.dct_log_ratios,
            config_hash=_combine_hash(self.config_hash, other.config_hash),
            video_id=self.video_id or other.video_id,
        )

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "feature_set": self.set_id,
            "config_hash": self.config_hash,
            "coupling": self.coupling,
            "coupled_slots": list(self.coupled_slots),
            "dct_log_ratios": list(self.dct_log_ratios),
            "names": list(self.names),
            "values": [None if math.isnan(v) else float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVector":
        values = [math.nan if v is None else v for v in d["values"]]
        return cls(
            set_id=d["feature_set"], names=tuple(d["names"]), values=np.asarray(values, dtype=np.float64),
            coupling=d.get("coupling"), coupled_slots=tuple(d.get("coupled_slots", ())),
            dct_log_ratios=tuple(d.get("dct_log_ratios", ())), config_hash=d.get("config_hash", ""),
            video_id=d.get("video_id", ""),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureVector":
        return cls.from_dict(json.loads(Path(path).read_text()))


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _combine_hash(a: str, b: str) -> str:
    return config_hash([a, b]) if a or b else ""
