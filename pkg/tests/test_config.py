import json

import pytest

from synthtrack.config import PRESETS, PipelineConfig, load_config, merge, preset, set_path
from synthtrack.exceptions import ConfigError
from synthtrack.hela import HelaConfig
from synthtrack.microvilli import MicrovilliConfig


@pytest.mark.parametrize("scenario", ["hela", "microvilli"])
def test_json_roundtrip_byte_exact(scenario):
    cfg = PipelineConfig(scenario=scenario).validate()
    text = cfg.to_json()
    again = PipelineConfig.from_json(text)
    assert again.to_json() == text
    assert again.digest() == cfg.digest()


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_roundtrip(name):
    cfg = preset(name, seed=3)
    assert PipelineConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()


def test_simulator_type_follows_scenario():
    assert isinstance(PipelineConfig.from_dict({"scenario": "microvilli"}).simulator, MicrovilliConfig)
    assert isinstance(PipelineConfig.from_dict({}).simulator, HelaConfig)


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"simulator": {"bogus": 1}},
    {"cluster": {"bandwidth": 0}},
    {"scenario": "yeast"},
    {"refine": {"registration": {"nope": 1}}},
    {"weights": {"fn": -1}},
    {"binarize": "median"},
    {"n_videos": 0},
    {"embedding": {"source": "file"}},
    {"simulator": {"p_radius": 2}},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(data)


def test_invalid_json_text():
    with pytest.raises(ConfigError):
        PipelineConfig.from_json("{not json")


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "simulator": {"frame_count": 4}}))
    cfg = load_config(p)
    assert cfg.seed == 5 and cfg.simulator.frame_count == 4


def test_helpers():
    d = set_path({}, "a.b.c", 1)
    assert d == {"a": {"b": {"c": 1}}}
    assert merge({"a": {"x": 1, "y": 2}}, {"a": {"y": 3}}) == {"a": {"x": 1, "y": 3}}
    with pytest.raises(ConfigError):
        set_path({"a": 1}, "a.b", 2)
