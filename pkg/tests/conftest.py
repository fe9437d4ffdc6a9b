"""
Pytest configuration and shared fixtures for detlp tests.

This module provides:
- Temporary directories for file I/O
- The archetypal experiment and its quantum frequency sets
- Logger doubles for checking emitted events
"""
import json
import tempfile
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest

from detlp.logging import DebugLogger
from detlp.model import ExperimentSpec, TalliedFrequencies, enumerate_outcomes, enumerate_settings
from detlp.quantum import preset_frequencies
from detlp.types import AppConfig, LoggingConfig


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests that need file I/O."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def archetype():
    """N = K = Z = 2 with observers Alice and Bob."""
    return ExperimentSpec.uniform(2, 2)


@pytest.fixture(scope="session")
def optimized_bell():
    """Singlet at (0, π/3) x (0, 2π/3)."""
    return preset_frequencies("optimized-bell")


@pytest.fixture(scope="session")
def ghz():
    return preset_frequencies("ghz")


@pytest.fixture(scope="session")
def mermin():
    return preset_frequencies("mermin")


@pytest.fixture(scope="session")
def product():
    return preset_frequencies("product")


def random_frequencies(spec: ExperimentSpec, rng: np.random.Generator) -> TalliedFrequencies:
    """Arbitrary normalized q on the tallied sets; generally signaling."""
    values = {}
    for s in enumerate_settings(spec):
        outs = enumerate_outcomes(spec, s, "tallied")
        w = rng.random(len(outs)) + 1e-3
        w /= w.sum()
        values[s] = dict(zip(outs, w.tolist()))
    return TalliedFrequencies(values)


@pytest.fixture
def mock_logger():
    """MagicMock standing in for a DebugLogger."""
    logger = MagicMock(spec=DebugLogger)
    logger.level = DebugLogger.LEVELS["INFO"]
    return logger


@pytest.fixture
def debug_logger(temp_dir):
    """Real DEBUG-level logger writing into the temp dir."""
    logger = DebugLogger(str(temp_dir / "events.jsonl"), level="DEBUG")
    yield logger
    logger.close()


def read_events(path):
    with open(path, "r") as f:
        return [json.loads(line) for line in f if line.strip()]


@pytest.fixture
def sample_config():
    return AppConfig(logging=LoggingConfig(level="DEBUG"), log_path="./data/logs/test_events.jsonl")


@pytest.fixture
def sample_config_file(temp_dir):
    """Create a temporary config file for testing config loading."""
    config_path = temp_dir / "test_config.json"
    config_data = {
        "tolerances": {"feasibility": 1e-9},
        "certificate": {"tolerance": 1e-6, "seed": 3},
        "scenario": {"bisection_iterations": 25},
        "logging": {"level": "DEBUG"},
        "log_path": str(temp_dir / "events.jsonl"),
    }
    with open(config_path, 'w') as f:
        json.dump(config_data, f, indent=2)
    return config_path
