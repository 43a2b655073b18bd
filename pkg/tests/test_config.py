import pytest

from shotladder.config import load_config
from shotladder.ladders import DEFAULT_BITRATE_STEPS, DEFAULT_QUALITY_STEPS, DEFAULT_RESOLUTIONS, Ladder
from shotladder.orchestrator import DEFAULT_CRFS
from shotladder.pipeline import EXAMPLE_FIXED_LADDER


def test_defaults_mirror_module_constants():
    cfg = load_config()
    assert cfg.resolutions() == DEFAULT_RESOLUTIONS
    assert cfg.encode_config().crfs == DEFAULT_CRFS
    lc = cfg.ladder_config()
    assert lc.bitrate_steps == DEFAULT_BITRATE_STEPS and lc.quality_steps == DEFAULT_QUALITY_STEPS
    assert lc.fixed_ladder == EXAMPLE_FIXED_LADDER
    assert cfg.q_range == (15.0, 95.0)
    p = cfg.trees_params()
    assert (p.n_trees, p.max_features) == (100, 0.34)
    assert cfg.trees_params(rng_seed=5).rng_seed == 5


def test_user_file_overrides_and_relative_ladder(tmp_path):
    Ladder.from_mapping("bitrate-ladder", {500: (1280, 720)}).save(tmp_path / "fixed.json")
    (tmp_path / "c.toml").write_text('[trees]\nn_trees = 7\n[ladder]\nfixed_ladder = "fixed.json"\n'
                                     '[constraints]\nq_min = 20\n')
    cfg = load_config(tmp_path / "c.toml")
    assert cfg.trees_params().n_trees == 7
    assert cfg.trees_params().max_features == 0.34
    assert cfg.ladder_config().fixed_ladder.levels == [500.0]
    assert cfg.q_range == (20.0, 95.0)
    assert len(cfg.ladder_config().bitrate_steps) == 13


def test_bad_values_raise(tmp_path):
    (tmp_path / "c.toml").write_text("[trees]\nn_trees = 0\n")
    with pytest.raises(ValueError):
        load_config(tmp_path / "c.toml").trees_params()
