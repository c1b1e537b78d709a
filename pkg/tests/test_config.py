"""Configuration parsing, validation, and round-trip tests.

The config layer is strict by design: unknown keys anywhere in the
document are rejected, and every bad value surfaces as a configuration
error (exit code 3), even when the underlying section class reports it
as a data error.
"""

import json

import pytest

from gazesense.config import (
    PathsConfig,
    PipelineConfig,
    ScreenConfig,
    TrainConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)
from gazesense.errors import BadConfig, ConfigError, DataError
from gazesense.events import EventDetectorParams
from gazesense.windows import WindowSpec


class TestDefaults:
    def test_default_object(self):
        cfg = PipelineConfig()
        assert cfg.task == "early_warning"
        assert cfg.source == "camera"
        assert cfg.scheme == "loso"
        assert cfg.seed == 0
        assert isinstance(cfg.window, WindowSpec)
        assert isinstance(cfg.detector, EventDetectorParams)
        assert isinstance(cfg.train, TrainConfig)
        assert isinstance(cfg.paths, PathsConfig)
        assert isinstance(cfg.screen, ScreenConfig)
        assert cfg.window.length_s == 60.0
        assert cfg.window.shift_s == 1.0

    def test_empty_document_gives_defaults(self):
        assert config_from_dict({}) == PipelineConfig()

    def test_partial_document_keeps_other_defaults(self):
        cfg = config_from_dict({"train": {"C": 2.0}, "seed": 7})
        assert cfg.train.C == 2.0
        assert cfg.train.max_iter == 100
        assert cfg.seed == 7
        assert cfg.window == WindowSpec()


class TestRoundTrip:
    def test_dict_round_trip_default(self):
        cfg = PipelineConfig()
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_dict_round_trip_custom(self):
        cfg = PipelineConfig(
            window=WindowSpec(length_s=30.0, shift_s=5.0),
            detector=EventDetectorParams(initial_threshold=250.0),
            train=TrainConfig(C=0.5, class_weight="none", max_iter=50),
            task="above_limit",
            source="both",
            scheme="loso_lodso",
            seed=99,
        )
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = PipelineConfig(task="multiclass", seed=5)
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_saved_file_is_sorted_json_with_newline(self, tmp_path):
        path = tmp_path / "cfg.json"
        save_config(PipelineConfig(), path)
        text = path.read_text()
        assert text.endswith("\n")
        doc = json.loads(text)
        assert list(doc) == sorted(doc)

    def test_serialize_parse_serialize_is_identity(self, tmp_path):
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_config(PipelineConfig(seed=3), p1)
        save_config(load_config(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestStrictness:
    def test_unknown_top_level_key(self):
        with pytest.raises(BadConfig, match="unknown top-level"):
            config_from_dict({"window_spec": {}})

    def test_unknown_section_key(self):
        with pytest.raises(BadConfig, match="unknown keys in window"):
            config_from_dict({"window": {"lenght_s": 60.0}})

    def test_unknown_key_in_every_section(self):
        for section in ("window", "detector", "train", "paths", "screen"):
            with pytest.raises(BadConfig, match=f"unknown keys in {section}"):
                config_from_dict({section: {"bogus": 1}})

    def test_section_must_be_object(self):
        with pytest.raises(BadConfig, match="must be an object"):
            config_from_dict({"train": 3})

    def test_document_must_be_object(self):
        with pytest.raises(BadConfig, match="JSON object"):
            config_from_dict([1, 2])

    def test_seed_type(self):
        with pytest.raises(BadConfig, match="seed"):
            config_from_dict({"seed": "7"})
        with pytest.raises(BadConfig, match="seed"):
            config_from_dict({"seed": True})

    def test_task_must_be_string(self):
        with pytest.raises(BadConfig, match="task"):
            config_from_dict({"task": 3})


class TestValueValidation:
    def test_bad_values_become_config_errors(self):
        bad = [
            {"window": {"length_s": -1.0}},
            {"window": {"min_valid_fraction": 1.5}},
            {"detector": {"max_iter": 0}},
            {"train": {"C": 0.0}},
            {"train": {"class_weight": "sqrt"}},
            {"train": {"max_iter": 0}},
            {"screen": {"viewing_distance_mm": -650.0}},
        ]
        for doc in bad:
            with pytest.raises(BadConfig):
                config_from_dict(doc)

    def test_config_error_not_data_error(self):
        # bad config values must map to exit code 3, not the data exit 2
        try:
            config_from_dict({"train": {"C": -1.0}})
        except ConfigError as exc:
            assert not isinstance(exc, DataError)
        else:
            pytest.fail("expected ConfigError")

    def test_enum_fields(self):
        with pytest.raises(BadConfig, match="task"):
            config_from_dict({"task": "bogus"})
        with pytest.raises(BadConfig, match="source"):
            config_from_dict({"source": "lidar"})
        with pytest.raises(BadConfig, match="scheme"):
            config_from_dict({"scheme": "kfold"})

    def test_train_config_direct(self):
        with pytest.raises(BadConfig):
            TrainConfig(tol=0.0)
        with pytest.raises(BadConfig):
            ScreenConfig(width_mm=0.0)


class TestLoadErrors:
    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(BadConfig, match="not valid JSON"):
            load_config(path)

    def test_missing_file_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.json")
