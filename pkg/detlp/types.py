"""
Configuration types and dataclasses for detlp.
"""
from dataclasses import dataclass, field
from typing import List, Optional


@dataclass
class SolverTolerances:
    """Tolerances shared by the simplex solver and every acceptance check."""
    feasibility: float = 1e-8
    optimality: float = 1e-9
    pivot: float = 1e-10
    max_iterations: int = 100000
    stall_limit: int = 50
    perturbation: float = 5e-7


@dataclass
class CertificateConfig:
    """Bell-certificate verification settings."""
    tolerance: float = 1e-7
    max_exhaustive: int = 1_000_000
    sample_size: int = 200_000
    seed: int = 0


@dataclass
class ScenarioConfig:
    """Scenario solving and model checking parameters."""
    pinning_slack: float = 1e-9
    degenerate_v: float = 1e-9
    model_tolerance: float = 1e-8
    bisection_iterations: int = 20


@dataclass
class LoggingConfig:
    """Logging configuration for debugging and monitoring."""
    level: str = "INFO"  # DEBUG, INFO, WARNING, ERROR, CRITICAL


@dataclass
class AppConfig:
    """Complete library configuration."""
    tolerances: SolverTolerances = field(default_factory=SolverTolerances)
    certificate: CertificateConfig = field(default_factory=CertificateConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    log_path: Optional[str] = None


@dataclass
class RunConfig:
    """One command-line invocation, after flag parsing."""
    command: str
    spec_path: Optional[str] = None
    freq_path: Optional[str] = None
    fixture_path: Optional[str] = None
    preset: Optional[str] = None
    objective: str = "dsym"
    fixes: List[str] = field(default_factory=list)
    lex: Optional[List[str]] = None
    pin: Optional[float] = None
    table: Optional[int] = None
    fixtures_dir: Optional[str] = None
    output_format: str = "table"
    out_path: Optional[str] = None
    jobs: int = 1
    tol_feas: Optional[float] = None
    bisect: bool = False
    certificate_path: Optional[str] = None
