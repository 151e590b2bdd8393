"""Scenario runner, safety observer, Monte Carlo liveness and the closed-form curve."""

from .formula import DomainError, pliveness_formula
from .montecarlo import LivenessPoint, monte_carlo_liveness
from .observer import ObserverViolation, SafetyObserver, Violation
from .scenario import (
    ConfigError,
    ForgeSpec,
    ReorgSpec,
    RequestSpec,
    ScenarioConfig,
    ScenarioResult,
    load_scenario,
    run_scenario,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "LivenessPoint",
    "ForgeSpec",
    "ObserverViolation",
    "ReorgSpec",
    "RequestSpec",
    "SafetyObserver",
    "ScenarioConfig",
    "ScenarioResult",
    "Violation",
    "load_scenario",
    "monte_carlo_liveness",
    "pliveness_formula",
    "run_scenario",
]
