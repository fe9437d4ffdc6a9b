"""
Configuration loading utilities for detlp.
"""
import json
import os
from dataclasses import fields, replace
from typing import Any, Dict, Optional, Type, TypeVar

# Load environment variables from .env file if it exists
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    # dotenv not installed, skip .env loading
    pass

from .types import AppConfig, CertificateConfig, LoggingConfig, ScenarioConfig, SolverTolerances

PROFILE_ENV_VAR = "DETLP_TOLERANCE_PROFILE"

TOLERANCE_PROFILES: Dict[str, SolverTolerances] = {
    "default": SolverTolerances(),
    "strict": SolverTolerances(feasibility=1e-10, optimality=1e-11, pivot=1e-12),
    "loose": SolverTolerances(feasibility=1e-6, optimality=1e-7, pivot=1e-9),
}

T = TypeVar("T")


def tolerance_profile(name: str) -> SolverTolerances:
    """Return a copy of a named tolerance profile."""
    key = name.strip().lower()
    if key not in TOLERANCE_PROFILES:
        raise ValueError(
            f"Unknown tolerance profile {name!r}; expected one of {sorted(TOLERANCE_PROFILES)}"
        )
    return replace(TOLERANCE_PROFILES[key])


def default_tolerances() -> SolverTolerances:
    """Tolerances selected by the DETLP_TOLERANCE_PROFILE environment variable."""
    return tolerance_profile(os.getenv(PROFILE_ENV_VAR, "default"))


def _section(cls: Type[T], data: Optional[Dict[str, Any]], base: Optional[T] = None) -> T:
    data = data or {}
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed - {"_comment"})
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {unknown}")
    values = {k: v for k, v in data.items() if k in allowed}
    if base is not None:
        return replace(base, **values)
    return cls(**values)


def load_config(path: Optional[str] = None) -> AppConfig:
    """Load configuration from JSON file (or defaults when path is None)."""
    d: Dict[str, Any] = {}
    if path is not None:
        with open(path, "r") as fp:
            d = json.load(fp)
    return AppConfig(
        tolerances=_section(SolverTolerances, d.get("tolerances"), default_tolerances()),
        certificate=_section(CertificateConfig, d.get("certificate")),
        scenario=_section(ScenarioConfig, d.get("scenario")),
        logging=_section(LoggingConfig, d.get("logging")),
        log_path=d.get("log_path"),
    )
