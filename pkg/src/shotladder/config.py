"""TOML configuration: packaged defaults overlaid with an optional user file."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ladders import Ladder, LadderConfig
from .orchestrator import EncodeConfig
from .trees import TreesParams

DATA = resources.files("shotladder") / "data"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class Config:
    raw: dict
    base_dir: Path | None = None  # directory used for relative paths in the user file

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def resolutions(self) -> tuple[tuple[int, int], ...]:
        return tuple((int(w), int(h)) for w, h in self.section("grid")["resolutions"])

    def encode_config(self, output_dir: str = "encodes") -> EncodeConfig:
        g = self.section("grid")
        return EncodeConfig(self.resolutions(), tuple(g["crfs"]), g.get("encoder", "libx265"),
                            g.get("preset", "medium"), output_dir)

    def fixed_ladder(self) -> Ladder | None:
        ref = self.section("ladder").get("fixed_ladder")
        if not ref:
            return None
        p = Path(ref)
        if not p.is_absolute():
            user = self.base_dir / p if self.base_dir is not None else None
            if user is not None and user.exists():
                p = user
            else:
                return Ladder.from_json((DATA / ref).read_text())
        return Ladder.load(p)

    def ladder_config(self) -> LadderConfig:
        lad = self.section("ladder")
        return LadderConfig(self.resolutions(), tuple(lad["bitrate_steps"]), tuple(lad["quality_steps"]),
                            self.fixed_ladder())

    def trees_params(self, **override) -> TreesParams:
        t = {**self.section("trees"), **{k: v for k, v in override.items() if v is not None}}
        return TreesParams(**t)

    @property
    def q_range(self) -> tuple[float, float]:
        c = self.section("constraints")
        return float(c["q_min"]), float(c["q_max"])


def default_toml() -> str:
    return (DATA / "default.toml").read_text()


def load_config(path: str | Path | None = None) -> Config:
    raw = tomllib.loads(default_toml())
    base_dir = None
    if path is not None:
        path = Path(path)
        raw = _merge(raw, tomllib.loads(path.read_text()))
        base_dir = path.parent
    return Config(raw, base_dir)
