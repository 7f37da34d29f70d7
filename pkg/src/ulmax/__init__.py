"""Decentralized projection-free online maximization of upper-linearizable functions."""

from .agents import RunReport, Schedule, make_schedule, run
from .geometry import Box, FlatSimplex, Simplex, infeasible_project, shrink
from .harness import ExperimentConfig, alpha_regret, fit_loglog_slope, offline_best, run_experiment
from .network import Topology, WeightMatrix, gossip, metropolis_weights
from .objectives import LinearizableSpec, QuadraticObjective, make_quadratic, make_spec

__all__ = [
    "Box", "ExperimentConfig", "FlatSimplex", "LinearizableSpec", "QuadraticObjective", "RunReport",
    "Schedule", "Simplex", "Topology", "WeightMatrix", "alpha_regret", "fit_loglog_slope", "gossip",
    "infeasible_project", "make_quadratic", "make_schedule", "make_spec", "metropolis_weights",
    "offline_best", "run", "run_experiment", "shrink",
]
__version__ = "0.1.0"
