"""Deterministic simulation of a full deployment with fault injection."""

from .faults import STRATEGY_ROLE, FaultPlan, NodeBehavior, PlanError
from .network import ScenarioHang, SimNetwork
from .scenario import (
    Deployment,
    ScenarioResult,
    assert_information_leakage,
    fault_tolerance_sweep,
    run_scenario,
)
from .timing import TimingRow, timing_matrix, timing_profile

__all__ = [
    "Deployment", "FaultPlan", "NodeBehavior", "PlanError", "STRATEGY_ROLE", "ScenarioHang",
    "ScenarioResult", "SimNetwork", "TimingRow", "assert_information_leakage",
    "fault_tolerance_sweep", "run_scenario", "timing_matrix", "timing_profile",
]
