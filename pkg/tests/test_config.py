"""
Tests for configuration loading and validation.

Tests cover:
- Configuration dataclass defaults
- Tolerance profiles and the DETLP_TOLERANCE_PROFILE variable
- Config loading from JSON files
- Invalid configuration handling
"""
import json
import os

import pytest

from detlp.config import PROFILE_ENV_VAR, default_tolerances, load_config, tolerance_profile
from detlp.types import (
    AppConfig,
    CertificateConfig,
    LoggingConfig,
    RunConfig,
    ScenarioConfig,
    SolverTolerances,
)


class TestDataclassDefaults:
    """Test configuration record defaults."""

    @pytest.mark.unit
    def test_solver_tolerances_defaults(self):
        tol = SolverTolerances()
        assert tol.feasibility == 1e-8
        assert tol.optimality == 1e-9
        assert tol.pivot == 1e-10
        assert tol.max_iterations == 100000
        assert tol.stall_limit == 50
        assert tol.perturbation == 5e-7

    @pytest.mark.unit
    def test_certificate_config_defaults(self):
        cfg = CertificateConfig()
        assert cfg.tolerance == 1e-7
        assert cfg.max_exhaustive == 1_000_000
        assert cfg.seed == 0

    @pytest.mark.unit
    def test_scenario_config_defaults(self):
        cfg = ScenarioConfig()
        assert cfg.pinning_slack == 1e-9
        assert cfg.degenerate_v == 1e-9
        assert cfg.model_tolerance == 1e-8
        assert cfg.bisection_iterations == 20

    @pytest.mark.unit
    def test_app_config_defaults(self):
        cfg = AppConfig()
        assert cfg.log_path is None
        assert cfg.logging == LoggingConfig()

    @pytest.mark.unit
    def test_run_config_defaults(self):
        run = RunConfig(command="solve")
        assert run.objective == "dsym"
        assert run.fixes == []
        assert run.output_format == "table"
        assert run.jobs == 1


class TestToleranceProfiles:
    """Test named tolerance profiles."""

    @pytest.mark.unit
    def test_named_profiles(self):
        assert tolerance_profile("default") == SolverTolerances()
        assert tolerance_profile("strict").feasibility == 1e-10
        assert tolerance_profile(" LOOSE ").feasibility == 1e-6

    @pytest.mark.unit
    def test_profiles_are_copies(self):
        """Mutating a returned profile leaves the registry untouched."""
        tol = tolerance_profile("default")
        tol.feasibility = 1.0
        assert tolerance_profile("default").feasibility == 1e-8

    @pytest.mark.unit
    def test_unknown_profile(self):
        with pytest.raises(ValueError, match="Unknown tolerance profile"):
            tolerance_profile("sloppy")

    @pytest.mark.unit
    def test_env_var_selects_profile(self, monkeypatch):
        monkeypatch.setenv(PROFILE_ENV_VAR, "strict")
        assert default_tolerances().optimality == 1e-11

    @pytest.mark.unit
    def test_env_var_absent(self, monkeypatch):
        monkeypatch.delenv(PROFILE_ENV_VAR, raising=False)
        assert default_tolerances() == SolverTolerances()


class TestConfigLoading:
    """Test configuration loading from JSON files."""

    @pytest.mark.unit
    def test_load_config_defaults_without_path(self, monkeypatch):
        monkeypatch.delenv(PROFILE_ENV_VAR, raising=False)
        assert load_config() == AppConfig()

    @pytest.mark.unit
    def test_load_config_success(self, sample_config_file, monkeypatch):
        """Values from the file override defaults section by section."""
        monkeypatch.delenv(PROFILE_ENV_VAR, raising=False)
        config = load_config(str(sample_config_file))

        assert isinstance(config, AppConfig)
        assert config.tolerances.feasibility == 1e-9
        assert config.tolerances.optimality == 1e-9
        assert config.certificate.tolerance == 1e-6
        assert config.certificate.seed == 3
        assert config.scenario.bisection_iterations == 25
        assert config.scenario.pinning_slack == 1e-9
        assert config.logging.level == "DEBUG"
        assert config.log_path.endswith("events.jsonl")

    @pytest.mark.unit
    def test_file_tolerances_layer_on_profile(self, temp_dir, monkeypatch):
        """Keys missing from the file come from the environment profile."""
        monkeypatch.setenv(PROFILE_ENV_VAR, "loose")
        path = temp_dir / "cfg.json"
        path.write_text(json.dumps({"tolerances": {"pivot": 1e-11}}))
        config = load_config(str(path))
        assert config.tolerances.pivot == 1e-11
        assert config.tolerances.feasibility == 1e-6

    @pytest.mark.unit
    def test_comment_keys_ignored(self, temp_dir):
        path = temp_dir / "cfg.json"
        path.write_text(json.dumps({"_comment": "x", "scenario": {"_comment": "y", "degenerate_v": 1e-6}}))
        assert load_config(str(path)).scenario.degenerate_v == 1e-6

    @pytest.mark.unit
    def test_unknown_section_key(self, temp_dir):
        path = temp_dir / "cfg.json"
        path.write_text(json.dumps({"certificate": {"tolerence": 1e-6}}))
        with pytest.raises(ValueError, match="tolerence"):
            load_config(str(path))

    @pytest.mark.unit
    def test_load_config_file_not_found(self):
        with pytest.raises(FileNotFoundError):
            load_config("/non/existent/config.json")

    @pytest.mark.unit
    def test_load_config_invalid_json(self, temp_dir):
        path = temp_dir / "invalid_config.json"
        path.write_text("invalid json content {")
        with pytest.raises(json.JSONDecodeError):
            load_config(str(path))

    @pytest.mark.unit
    def test_example_config_loads(self):
        """The shipped example is a valid configuration."""
        here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        config = load_config(os.path.join(here, "config.example.json"))
        assert config.certificate.sample_size == 200000
        assert config.log_path == "./data/logs/detlp_events.jsonl"
