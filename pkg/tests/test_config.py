import json

import pytest

from ilrkit.config import PipelineConfig, config_from_dict, load_config
from ilrkit.errors import ConfigError


def test_default_config_is_valid():
    PipelineConfig().validate()


def test_hash_is_stable_and_sensitive():
    a, b = PipelineConfig(), PipelineConfig()
    assert a.config_hash() == b.config_hash()
    c = PipelineConfig(seed=8)
    assert c.config_hash() != a.config_hash()


def test_from_dict_round_trip():
    cfg = PipelineConfig(seed=3, k=4, taus=(0.1, 0.6))
    rebuilt = config_from_dict(cfg.to_dict())
    assert rebuilt == cfg
    assert rebuilt.config_hash() == cfg.config_hash()


def test_unknown_fields_rejected():
    with pytest.raises(ConfigError, match="unknown config fields"):
        config_from_dict({"seeed": 3})
    with pytest.raises(ConfigError, match="unknown synth fields"):
        config_from_dict({"synth": {"alpha": 0.5, "beta": 1.0}})


@pytest.mark.parametrize(
    "overrides,match",
    [
        ({"k": 1}, "k must be"),
        ({"tau": 1.0}, "tau"),
        ({"taus": [0.5]}, "taus"),
        ({"test_fraction": 0.0}, "test_fraction"),
        ({"positive_rate": 2.0}, "positive_rate"),
        ({"format": "csv"}, "format"),
        ({"n_tasks": 0}, "task counts"),
    ],
)
def test_validation_errors(overrides, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(overrides)


def test_nested_overrides():
    cfg = config_from_dict({"synth": {"alpha": 0.5}, "expert": {"epochs": 3},
                            "adapter": {"step_size": 0.01}})
    assert cfg.synth.alpha == 0.5
    assert cfg.expert.epochs == 3
    assert cfg.adapter.step_size == 0.01
    assert cfg.synth.sigma == PipelineConfig().synth.sigma


def test_load_config_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 11, "k": 3}))
    cfg = load_config(path)
    assert cfg.seed == 11 and cfg.k == 3


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(arr)
