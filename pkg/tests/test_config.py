"""Tests for config file parsing and pipeline configuration merging."""

from pathlib import Path

import pytest

import main
from config.settings import Settings, load_pipeline_config, read_config_file
from exceptions import ConfigError
from models.specs import DEFAULT_LEARNING_RATE, DetectorMode, EnsembleMethod, TrainConfig


class TestReadConfigFile:
    def test_key_value(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("# comment\nmethod = tta\nensemble-size = 4\n\nfill_holes = false\n")
        assert read_config_file(path) == {
            "method": "tta",
            "ensemble_size": "4",
            "fill_holes": "false",
        }

    def test_yaml(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("method: de\ndelta: 0.1\nrelabel: false\n")
        assert read_config_file(path) == {"method": "de", "delta": 0.1, "relabel": False}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("method tta\n")
        with pytest.raises(ConfigError, match="run.conf:1"):
            read_config_file(path)

    def test_nested_yaml(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("noise:\n  kind: smooth\n")
        with pytest.raises(ConfigError, match="nested"):
            read_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(tmp_path / "absent.conf")

    def test_relative_manifest(self, tmp_path):
        (tmp_path / "cfg").mkdir()
        path = tmp_path / "cfg" / "run.conf"
        path.write_text("manifest = data/manifest.csv\n")
        assert read_config_file(path)["manifest"] == tmp_path / "cfg" / "data" / "manifest.csv"


class TestLoadPipelineConfig:
    def test_defaults(self):
        cfg = load_pipeline_config()
        assert cfg.method == EnsembleMethod.MCDO
        assert cfg.delta == 0.125
        assert cfg.detector_mode == DetectorMode.ONLINE

    def test_learning_rate_default_is_shared(self):
        args = main.build_parser().parse_args(["train", "--manifest", "m.csv", "--out", "m.bin"])
        assert args.lr == DEFAULT_LEARNING_RATE == 0.005
        assert load_pipeline_config().train_config.learning_rate == DEFAULT_LEARNING_RATE
        assert TrainConfig().learning_rate == DEFAULT_LEARNING_RATE

    def test_file_values_are_coerced(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("method = tta\nensemble_size = 4\nfill_holes = false\ndelta = 0.2\n")
        cfg = load_pipeline_config(path)
        assert cfg.ensemble_spec.method == EnsembleMethod.TTA
        assert cfg.ensemble_spec.n == 4
        assert cfg.relabel_spec.fill_holes is False
        assert cfg.relabel_spec.delta == 0.2

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("epochs = 4\nseed = 3\n")
        cfg = load_pipeline_config(path, {"epochs": "9", "seed": None})
        assert cfg.epochs == 9
        assert cfg.seed == 3

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("learning_rat = 0.1\n")
        with pytest.raises(ConfigError, match="learning_rat"):
            load_pipeline_config(path)

    @pytest.mark.parametrize(
        "key, value",
        [
            ("delta", "0.3"),
            ("noise_kind", "wobbly"),
            ("method", "bagging"),
            ("ensemble_size", "0"),
            ("noise_vertices", "2"),
            ("seed", "4294967296"),
            ("seed", "4294967290"),
        ],
    )
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigError):
            load_pipeline_config(overrides={key: value})

    def test_tta_size_limit(self):
        with pytest.raises(ConfigError):
            load_pipeline_config(overrides={"method": "tta", "ensemble_size": 9})

    def test_noise_none(self):
        assert load_pipeline_config(overrides={"noise_kind": "none"}).noise_spec is None

    def test_manifest_skips_corpus_checks(self, tmp_path):
        cfg = load_pipeline_config(
            overrides={"manifest": str(tmp_path / "m.csv"), "corpus_contrast": "0.01"}
        )
        assert cfg.manifest == Path(tmp_path / "m.csv")


class TestSettings:
    def test_environment_prefix(self, monkeypatch):
        monkeypatch.setenv("MASKMEND_WORKERS", "3")
        monkeypatch.setenv("MASKMEND_LOG_LEVEL", "DEBUG")
        current = Settings()
        assert current.WORKERS == 3
        assert current.LOG_LEVEL == "DEBUG"
