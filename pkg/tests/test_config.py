"""Configuration loading, profiles and validation."""

from __future__ import annotations

import json

import pytest

from pointformer.core.config import (
    PointFormerConfig,
    config_to_dict,
    default_config,
    load_config,
)
from pointformer.core.errors import (
    EXIT_DATA,
    EXIT_INTERNAL,
    EXIT_USER,
    ConfigError,
    InvariantError,
    OverlapError,
    ParseError,
    RangeError,
    ShapeError,
)


class TestProfiles:
    def test_vitb_defaults(self):
        config = default_config("vitb")
        bb = config.backbone
        assert (bb.depth, bb.width, bb.heads) == (12, 768, 12)
        assert config.backbone.d_hat == 64
        assert config.backbone.scale == pytest.approx(0.1)
        assert config.train.lr_max == pytest.approx(5e-4)
        assert config.train.weight_decay == pytest.approx(5e-2)

    def test_tiny_overlay(self):
        config = default_config("tiny")
        assert (config.backbone.depth, config.backbone.width, config.backbone.d_hat) == (4, 64, 8)
        assert config.geometry.n_groups + 1 <= config.backbone.max_tokens
        config.validate()

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            default_config("huge")


class TestLoadConfig:
    def test_yaml_overrides_profile(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("system:\n  profile: tiny\ntrain:\n  epochs: 7\n  lr_max: 0.001\n")
        config = load_config(str(path))
        assert config.system.profile == "tiny"
        assert config.train.epochs == 7
        assert config.train.lr_max == pytest.approx(1e-3)
        assert config.backbone.width == 64

    def test_unknown_key_is_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("train:\n  learning_rate: 0.1\n")
        with pytest.raises(ConfigError, match="train.learning_rate"):
            load_config(str(path))

    def test_unknown_section_is_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("optimizer:\n  lr: 0.1\n")
        with pytest.raises(ConfigError, match="optimizer"):
            load_config(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.yaml"))

    def test_env_seed_override(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.yaml"
        path.write_text("system:\n  profile: tiny\n")
        monkeypatch.setenv("POINTFORMER_SEED", "42")
        assert load_config(str(path)).train.seed == 42

    def test_tuple_values_are_coerced(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("system:\n  profile: tiny\nembed:\n  hidden: [32, 64]\n")
        assert load_config(str(path)).embed.hidden == (32, 64)

    def test_config_to_dict_is_json_ready(self):
        data = config_to_dict(default_config("tiny"))
        assert json.loads(json.dumps(data))["backbone"]["width"] == 64


class TestValidation:
    def test_token_capacity(self):
        config = default_config("tiny")
        config.geometry.n_groups = 100
        config.geometry.n_points = 256
        with pytest.raises(ConfigError, match="max_tokens"):
            config.validate()

    def test_rpn_with_trainable_embedding_conflicts(self):
        config = default_config("tiny")
        config.embed.mode = "rpn"
        config.embed.trainable = True
        with pytest.raises(ConfigError, match="conflicts"):
            config.validate()

    def test_width_must_divide_heads(self):
        config = default_config("tiny")
        config.backbone.heads = 3
        with pytest.raises(ConfigError):
            config.validate()

    def test_taps_must_increase(self):
        config = default_config("tiny")
        config.heads.taps = (3, 2)
        with pytest.raises(ConfigError):
            config.validate()

    def test_lr_order(self):
        config = PointFormerConfig()
        config.train.lr_min = 1.0
        with pytest.raises(ConfigError):
            config.validate()

    def test_groups_cannot_exceed_points(self):
        config = default_config("tiny")
        config.geometry.n_points = 16
        with pytest.raises(ConfigError, match="n_points"):
            config.validate()


class TestErrors:
    @pytest.mark.parametrize(
        ("error", "code"),
        [
            (ConfigError("x"), EXIT_USER),
            (RangeError("x"), EXIT_USER),
            (ParseError("x", 3), EXIT_DATA),
            (OverlapError("x"), EXIT_DATA),
            (ShapeError("x"), EXIT_INTERNAL),
            (InvariantError("x"), EXIT_INTERNAL),
        ],
    )
    def test_exit_codes(self, error, code):
        assert error.exit_code == code

    def test_parse_error_names_line(self):
        err = ParseError("bad vertex", 7)
        assert err.line == 7
        assert str(err) == "line 7: bad vertex"
