"""Exponential stability analysis for delayed neural networks.

The weighted integral inequalities, the LMI criterion built from them, a
strict-feasibility SDP check, bisection searches for admissible bounds and
a fixed-step simulator for the delayed dynamics.
"""

from .dde_sim import DelayFunction, check_envelope, estimate_decay_rate, simulate
from .lmi import build_theorem_lmis, compute_overshoot, declare_decision_variables
from .model import PRESETS, AnalysisParams, NetworkModel
from .sdp import check_system
from .search import SearchSpec, max_delay, max_rate, reproduce_table

__all__ = [
    "AnalysisParams", "DelayFunction", "NetworkModel", "PRESETS", "SearchSpec",
    "build_theorem_lmis", "check_envelope", "check_system", "compute_overshoot", "declare_decision_variables",
    "estimate_decay_rate", "max_delay", "max_rate", "reproduce_table", "simulate",
]
