"""Feature-set names (``viff1``..``viff9``, ``llf1``..``llf3``) and combined extraction."""
from __future__ import annotations

import re

from .media import VideoClip
from .texture import LLF_LENGTHS, TextureConfig, extract_llf
from .vector import FeatureVector, config_hash
from .vif import VIFF_LENGTHS, VifConfig, extract_viff

_PART = re.compile(r"^(viff|llf)([0-9])$")


def parse_feature_sets(sets: str) -> list[tuple[str, int]]:
    """``"llf2+viff7"`` -> ``[("llf", 2), ("viff", 7)]``. ``"none"`` means metadata only."""
    sets = sets.strip().lower()
    if sets in ("", "none", "metadata"):
        return []
    parts = []
    for token in sets.split("+"):
        m = _PART.match(token.strip())
        if not m:
            raise ValueError(f"unknown feature set {token!r}")
        family, idx = m.group(1), int(m.group(2))
        valid = VIFF_LENGTHS if family == "viff" else LLF_LENGTHS
        if idx not in valid:
            raise ValueError(f"unknown feature set {token!r}")
        parts.append((family, idx))
    return parts


def feature_count(sets: str) -> int:
    return sum((VIFF_LENGTHS if f == "viff" else LLF_LENGTHS)[i] for f, i in parse_feature_sets(sets))


def viff_vector(clip: VideoClip, set_id: int, config: VifConfig = VifConfig()) -> FeatureVector:
    names, values = extract_viff(clip, set_id, config)
    cfg = {"viff": set_id, "sigma_n_sq": config.sigma_n_sq, "normalize_to_8bit": config.normalize_to_8bit}
    return FeatureVector(f"viff{set_id}", tuple(names), values, config_hash=config_hash(cfg))


def extract_features(clip: VideoClip, sets: str, video_id: str = "",
                     vif_config: VifConfig = VifConfig(),
                     texture_config: TextureConfig = TextureConfig()) -> FeatureVector:
    """Extract and concatenate the named feature sets.

    Bitrate/quality-coupled slots of ``llf2``/``llf3`` are left unresolved;
    call :meth:`FeatureVector.resolve` per encode.
    """
    parts = parse_feature_sets(sets)
    if not parts:
        raise ValueError("no content feature set requested")
    vec = None
    for family, idx in parts:
        if family == "viff":
            part = viff_vector(clip, idx, vif_config)
        else:
            part = extract_llf(clip, idx, config=texture_config, resolve_required=False)
        vec = part if vec is None else vec.concat(part)
    return FeatureVector(vec.set_id, vec.names, vec.values, vec.coupling, vec.coupled_slots,
                         vec.dct_log_ratios, vec.config_hash, video_id)
