"""
Tests for configuration loading: defaults, files, environment and flags.
"""

import pytest

from app.core.config import FORMAT_VERSION, load_settings
from app.core.deps import scan_range
from app.core.errors import ConfigError


class TestLoadSettings:
    """Precedence and validation of the run configuration."""

    def test_defaults(self):
        settings = load_settings()
        assert settings.domain.nx == 801
        assert settings.domain.half_length == 20.0
        assert settings.domain.n_modes == 8
        assert settings.solver.newton_tol == 1e-10
        assert settings.scan.k == 1

    def test_file_overrides_defaults(self, config_file):
        path = config_file("SCHEMA_VERSION=1\nDOMAIN__NX=401\nSCAN__K=2\n")
        settings = load_settings(path)
        assert settings.domain.nx == 401
        assert settings.scan.k == 2

    def test_flags_override_the_file(self, config_file):
        path = config_file("SCHEMA_VERSION=1\nDOMAIN__NX=401\n")
        settings = load_settings(path, {"domain": {"nx": 201, "half_length": None}})
        assert settings.domain.nx == 201
        assert settings.domain.half_length == 20.0

    def test_environment_overrides_defaults(self, monkeypatch):
        monkeypatch.setenv("VORTEXSTRIP_DOMAIN__NX", "201")
        assert load_settings().domain.nx == 201

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc_info:
            load_settings(tmp_path / "absent.env")
        assert "does not exist" in str(exc_info.value)

    def test_schema_version_is_required(self, config_file):
        with pytest.raises(ConfigError) as exc_info:
            load_settings(config_file("DOMAIN__NX=401\n"))
        assert "SCHEMA_VERSION" in str(exc_info.value)

    def test_schema_version_must_match(self, config_file):
        with pytest.raises(ConfigError) as exc_info:
            load_settings(config_file("SCHEMA_VERSION=2\n"))
        assert "Unsupported" in str(exc_info.value)
        assert exc_info.value.exit_code == 2

    @pytest.mark.parametrize("line", ["NX=401", "DOMAIN__WIDTH=5", "GRID__NX=401"])
    def test_unknown_keys(self, config_file, line):
        with pytest.raises(ConfigError):
            load_settings(config_file(f"SCHEMA_VERSION=1\n{line}\n"))

    @pytest.mark.parametrize("line", ["DOMAIN__NX=many", "SCAN__K=0"])
    def test_invalid_values(self, config_file, line):
        with pytest.raises(ConfigError) as exc_info:
            load_settings(config_file(f"SCHEMA_VERSION=1\n{line}\n"))
        assert "Invalid configuration" in str(exc_info.value)

    def test_resolved_config_is_versioned(self):
        resolved = load_settings().resolved_config()
        assert resolved["format_version"] == FORMAT_VERSION
        assert resolved["domain"]["nx"] == 801


class TestScanRange:
    """Inclusive scan grids."""

    def test_endpoints_are_included(self):
        assert scan_range(1.0, 1.5, 0.25) == pytest.approx([1.0, 1.25, 1.5])

    def test_single_point(self):
        assert scan_range(2.0, 2.0, 0.1) == pytest.approx([2.0])

    @pytest.mark.parametrize("start, stop, step", [(1.0, 2.0, 0.0), (2.0, 1.0, 0.1)])
    def test_invalid_ranges(self, start, stop, step):
        with pytest.raises(ConfigError):
            scan_range(start, stop, step)
