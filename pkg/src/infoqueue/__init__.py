"""Queueing with finite-blocklength random-coding service."""

from ._validation import ConfigError, InfeasibleError, NonConvergenceError
from .channel import (
    DegradedBroadcastSpec,
    DiscreteMac,
    GaussianMacSpec,
    InputDistribution,
    adder_mac,
    mutual_information,
)
from .codelen import MessageClass, min_codeword_length_dbc, min_codeword_length_mac, service_requirement
from .exponents import e0_dbc, e0_gaussian_quantum, e0_independent, e0_mac_subset, e0_over_rho_limit, e0_single
from .qsim import ArrivalModel, ArrivalProcess, SimConfig, SimReport, classify_stability, run
from .regions import StabilityRegion, outer_membership, synthesize_policy
from .sched import PolicySpec, enumerate_schedules

__version__ = "0.1.0"

__all__ = [
    "ArrivalModel",
    "ArrivalProcess",
    "ConfigError",
    "DegradedBroadcastSpec",
    "DiscreteMac",
    "GaussianMacSpec",
    "InfeasibleError",
    "InputDistribution",
    "MessageClass",
    "NonConvergenceError",
    "PolicySpec",
    "SimConfig",
    "SimReport",
    "StabilityRegion",
    "adder_mac",
    "classify_stability",
    "e0_dbc",
    "e0_gaussian_quantum",
    "e0_independent",
    "e0_mac_subset",
    "e0_over_rho_limit",
    "e0_single",
    "enumerate_schedules",
    "min_codeword_length_dbc",
    "min_codeword_length_mac",
    "mutual_information",
    "outer_membership",
    "run",
    "service_requirement",
    "synthesize_policy",
]
