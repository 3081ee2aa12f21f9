"""Tests for configuration loading."""

import json

import pytest

from pmfence.analysis import Mode
from pmfence.config import AnalysisConfig, load_config, parse_allocators, parse_mode
from pmfence.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    def _write(data) -> str:
        path = tmp_path / "pmfence.json"
        path.write_text(data if isinstance(data, str) else json.dumps(data))
        return str(path)

    return _write


class TestAnalysisConfig:
    """Tests for AnalysisConfig defaults and validation."""

    def test_defaults(self, config):
        """Test the default settings."""
        assert config.mode is Mode.OPT
        assert config.allocators == frozenset({"pmalloc"})
        assert config.lineattr is None
        assert config.bound == 64

    @pytest.mark.parametrize("lineattr", [4, 100, 0])
    def test_lineattr_must_be_power_of_two(self, lineattr):
        """Test that line sizes below 8 or not a power of two are rejected."""
        with pytest.raises(ConfigError):
            AnalysisConfig(lineattr=lineattr)

    def test_pmalloc_required(self):
        """Test that the allocator set must keep pmalloc."""
        with pytest.raises(ConfigError):
            AnalysisConfig(allocators=frozenset({"my_alloc"}))

    def test_bound_positive(self):
        """Test that a zero bound is rejected."""
        with pytest.raises(ConfigError) as exc_info:
            AnalysisConfig(bound=0)

        assert "bound" in str(exc_info.value)


class TestParsers:
    """Tests for the value converters."""

    def test_parse_mode(self):
        """Test that mode names map to modes and unknown ones raise."""
        assert parse_mode("flit") is Mode.FLIT
        with pytest.raises(ConfigError) as exc_info:
            parse_mode("fast")

        assert "fast" in str(exc_info.value)

    def test_parse_allocators(self):
        """Test comma-separated allocator lists; pmalloc is always added."""
        assert parse_allocators("my_alloc, pool_alloc,") == frozenset({"pmalloc", "my_alloc", "pool_alloc"})
        assert parse_allocators(["a"]) == frozenset({"pmalloc", "a"})


class TestLoadConfig:
    """Tests for load_config."""

    def test_no_file(self):
        """Test that no file and no overrides gives the defaults."""
        assert load_config() == AnalysisConfig()

    def test_from_file(self, config_file):
        """Test reading a JSON config."""
        path = config_file({"mode": "flit", "allocators": ["my_alloc"], "lineattr": 128})

        config = load_config(path)

        assert config.mode is Mode.FLIT
        assert config.allocators == frozenset({"pmalloc", "my_alloc"})
        assert config.lineattr == 128

    def test_overrides_win(self, config_file):
        """Test that explicit values beat the file and None values are ignored."""
        path = config_file({"mode": "flit", "bound": 10})

        config = load_config(path, mode="base", bound=None)

        assert config.mode is Mode.BASE
        assert config.bound == 10

    def test_missing_file(self, tmp_path):
        """Test that a missing config file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.json")

    def test_unknown_key(self, config_file):
        """Test that unknown keys are reported by name."""
        with pytest.raises(ConfigError) as exc_info:
            load_config(config_file({"mode": "opt", "colour": "blue"}))

        assert "colour" in str(exc_info.value)

    @pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
    def test_malformed(self, config_file, text):
        """Test that bad JSON and non-object documents are rejected."""
        with pytest.raises(ConfigError):
            load_config(config_file(text))

    def test_integer_keys_checked(self, config_file):
        """Test that numeric settings must be integers."""
        with pytest.raises(ConfigError) as exc_info:
            load_config(config_file({"bound": "ten"}))

        assert "bound must be an integer" in str(exc_info.value)

    def test_bad_mode_override(self):
        """Test that an unknown mode from the command line is a ConfigError."""
        with pytest.raises(ConfigError):
            load_config(mode="turbo")
