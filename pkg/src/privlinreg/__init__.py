"""Differentially private decentralized linear regression."""

__version__ = "0.1.0"

from .core.config import ExperimentConfig
from .core.data_model import LocalDataset, NetworkDataset, generate_synthetic
from .core.engine import Scenario, Trajectory, run_baseline, run_private
from .core.privacy_audit import PrivacyAuditReport, audit, monte_carlo_dp_check
from .core.projection import OmegaBall, project, suggest_omega
from .core.schedules import BudgetInputs, ScheduleParams, privacy_budget
from .core.topology import NetworkGraph, build_graph, metropolis_weights

__all__ = [
    "BudgetInputs",
    "ExperimentConfig",
    "LocalDataset",
    "NetworkDataset",
    "NetworkGraph",
    "OmegaBall",
    "PrivacyAuditReport",
    "Scenario",
    "ScheduleParams",
    "Trajectory",
    "audit",
    "build_graph",
    "generate_synthetic",
    "metropolis_weights",
    "monte_carlo_dp_check",
    "privacy_budget",
    "project",
    "run_baseline",
    "run_private",
    "suggest_omega",
]
