from pathlib import Path

import pytest
import yaml

from ddq.config import (ConfigError, ExperimentConfig, config_from_dict, config_hash, default_config_yaml,
                        load_config)
from ddq.errors import FormatError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "ddq" / "configs"


@pytest.mark.parametrize("name", ["fig2_recall.yaml", "gradient.yaml", "cascade.yaml"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIG_DIR / name)
    assert cfg.schema_version == 1


def test_default_round_trip():
    for kind in ("recall", "gradient", "cascade"):
        cfg = config_from_dict(yaml.safe_load(default_config_yaml(kind)))
        assert cfg == ExperimentConfig(experiment=kind)


def test_schema_mismatch_has_hint():
    with pytest.raises(ConfigError, match="print-default-config"):
        config_from_dict({"schema_version": 2})
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict({"experiment": "recall"})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="nms_iuo"):
        config_from_dict({"schema_version": 1, "recall": {"nms_iuo": 0.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "sedes": 3})


def test_invalid_values():
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "response": {"gamma": 0}})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1, "seeds": 0})


def test_parse_error_has_line(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nscene:\n  image_w: [1, 2\n")
    with pytest.raises(FormatError) as err:
        load_config(bad)
    assert err.value.line is not None and str(bad) in str(err.value)
    with pytest.raises(FormatError):
        load_config(tmp_path / "nope.yaml")


def test_json_config_and_hash(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"schema_version": 1, "experiment": "cascade", "seeds": 2}')
    assert load_config(p).seeds == 2
    assert len(config_hash(p)) == 64
