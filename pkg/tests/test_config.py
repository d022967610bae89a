from pathlib import Path

import pytest
from pydantic import ValidationError

from topogen.config import DatasetConfig, EnvironmentConfig, load_config
from topogen.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.parametrize("name", ["desk.yaml", "production.yaml", "wfc.yaml"])
def test_shipped_configs_load(name):
    config = load_config(ROOT / "config" / name)
    assert config.genus_range[0] <= config.genus_range[1]
    assert len(config.genera) == config.genus_range[1] - config.genus_range[0] + 1


def test_desk_config_values():
    config = load_config(ROOT / "config" / "desk.yaml")
    assert config.genus_range == (0, 5)
    assert config.voxel_resolution == 64
    assert config.environment.method == "random_grid"
    assert [o.mode for o in config.noise] == ["add", "add", "subtract"]


def test_yaml_and_json_agree(tmp_path):
    (tmp_path / "a.yaml").write_text("genus_range: [2, 4]\nsamples_per_genus: 3\ngrowth:\n  target_area_multiplier: 2\n")
    (tmp_path / "a.json").write_text('{"genus_range": [2, 4], "samples_per_genus": 3, "growth": {"target_area_multiplier": 2}}')
    assert load_config(tmp_path / "a.yaml") == load_config(tmp_path / "a.json")


def test_empty_document_gives_defaults(tmp_path):
    (tmp_path / "empty.yaml").write_text("")
    assert load_config(tmp_path / "empty.yaml") == DatasetConfig()


class TestConfigErrors:

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.yaml")

    def test_bad_yaml(self, tmp_path):
        (tmp_path / "bad.yaml").write_text("genus_range: [0, 3\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(tmp_path / "bad.yaml")

    def test_bad_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{genus_range: }")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(tmp_path / "bad.json")

    @pytest.mark.parametrize(
        "body",
        [
            "unknown_key: 1\n",
            "genus_range: [3, 1]\n",
            "genus_range: [0, 25]\n",
            "voxel_resolution: 4\n",
            "train_test_split: 1.0\n",
            "growth:\n  target_area_range: [0.5, 2]\n",
            "environment:\n  method: maze\n",
            "noise:\n  - {scale: 8, threshold: .nan, mode: add}\n",
        ],
    )
    def test_invalid_values(self, tmp_path, body):
        (tmp_path / "c.yaml").write_text(body)
        with pytest.raises(ConfigError, match="invalid config"):
            load_config(tmp_path / "c.yaml")


def test_pad_must_leave_room():
    with pytest.raises(ValidationError):
        DatasetConfig(voxel_resolution=8, voxel_pad=4)


def test_environment_config_builds_both_methods(monkeypatch):
    grid_env = EnvironmentConfig.model_validate({"random_grid": {"connection_probability_range": [0, 0]}}).build(3)
    assert grid_env.box_count == 0
    assert grid_env.provenance["method"] == "random_grid"

    monkeypatch.chdir(ROOT)
    wfc = load_config(ROOT / "config" / "wfc.yaml").environment
    env = wfc.build(3)
    assert env.provenance["method"] == "wfc"
    assert env.box_count > 0
