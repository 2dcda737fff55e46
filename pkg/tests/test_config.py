import pytest
from pydantic import ValidationError

from savgridnet.core.config import (
    ClassifierConfig,
    GridNetConfig,
    StftConfig,
    flatten,
    load_settings,
    parse_key_value_text,
    parse_overrides,
)
from savgridnet.core.errors import ConfigurationError


class TestKeyValueText:
    def test_sections_comments_and_lists(self):
        tree = parse_key_value_text(
            "workers = 2  # threads\n"
            "\n"
            "[gridnet]\n"
            "D = 16\n"
            "[loss]\n"
            "resolutions = [(64, 16, 32), (128, 32, 64)]\n"
        )
        assert tree == {
            "workers": "2",
            "gridnet": {"D": "16"},
            "loss": {"resolutions": [[64, 16, 32], [128, 32, 64]]},
        }

    def test_dotted_keys_nest(self):
        assert parse_key_value_text("gridnet.visual.R = 3") == {"gridnet": {"visual": {"R": "3"}}}

    def test_malformed_line(self):
        with pytest.raises(ConfigurationError, match="Line 2"):
            parse_key_value_text("workers = 2\njust words\n")

    def test_scalar_conflict(self):
        with pytest.raises(ConfigurationError):
            parse_overrides(["gridnet=1", "gridnet.D=4"])

    def test_flatten(self):
        assert flatten({"a": {"b": 1, "c": [1, 2]}, "d": "x"}) == {"a.b": "1", "a.c": "[1, 2]", "d": "x"}


class TestLoadSettings:
    def test_defaults(self):
        settings = load_settings()
        assert settings.gridnet.stft.num_bins == 129
        assert settings.training.halve_patience == 6
        assert settings.training.stop_patience == 20
        assert settings.loss.M == 3

    def test_file_values(self, tmp_path):
        path = tmp_path / "savg.conf"
        path.write_text("workers = 3\n[gridnet]\nD = 16\n[gridnet.visual]\nR = 1\n")
        settings = load_settings(path)
        assert settings.workers == 3
        assert settings.gridnet.D == 16
        assert settings.gridnet.visual.R == 1
        assert settings.gridnet.H == GridNetConfig().H

    def test_overrides_beat_environment_beats_file(self, tmp_path, monkeypatch):
        path = tmp_path / "savg.conf"
        path.write_text("workers = 2\nlog_level = DEBUG\n[gridnet]\nD = 16\n")
        monkeypatch.setenv("SAVG_WORKERS", "5")
        settings = load_settings(path, ["gridnet.D=24"])
        assert settings.workers == 5
        assert settings.gridnet.D == 24
        assert settings.log_level == "DEBUG"

    def test_unknown_file_key(self, tmp_path):
        path = tmp_path / "savg.conf"
        path.write_text("bogus = 1\n")
        with pytest.raises(ConfigurationError, match="bogus"):
            load_settings(path)

    @pytest.mark.parametrize("override", ["trainng.lr=0.5", "bogus=1"])
    def test_unknown_override_key(self, override):
        with pytest.raises(ConfigurationError, match="Unknown configuration keys"):
            load_settings(overrides=[override])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_settings(tmp_path / "absent.conf")

    @pytest.mark.parametrize(
        "override",
        ["gridnet.L=3", "gridnet.J=9", "gridnet.stft.hop_size=512", "simulation.noise_ratio=2", "workers=0"],
    )
    def test_invalid_values(self, override):
        with pytest.raises(ConfigurationError, match="Invalid configuration"):
            load_settings(overrides=[override])

    def test_sections_reject_unknown_fields(self):
        with pytest.raises(ConfigurationError):
            load_settings(overrides=["gridnet.depth=3"])


class TestSections:
    def test_full_size_presets(self):
        gridnet = GridNetConfig.full_size()
        assert (gridnet.D, gridnet.B, gridnet.H, gridnet.visual.R) == (48, 6, 192, 5)
        assert ClassifierConfig.full_size().max_dilation == 128

    def test_sections_are_frozen(self):
        with pytest.raises(ValidationError):
            StftConfig().hop_size = 64

    def test_stft_size_order(self):
        with pytest.raises(ValidationError):
            StftConfig(window_size=64, hop_size=32, fft_size=32)
