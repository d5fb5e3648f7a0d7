"""Layered-environment percolation: lattices, lazy exploration, couplings and checks."""

from ._validation import DomainError
from .bounds import (BadBlock, Verdict, block_crossing_prob, critical_layers_experiment,
                     crossing_decay_check, growth_ratio_check, locate_bad_blocks,
                     subcritical_bound)
from .coupling import (CouplingTrace, f, f_layered, oracle_comparison, run_coupling,
                       run_coupling_bond, run_coupling_site, verify_witness)
from .environment import EnvParams, LayeredEnv, LayerType, SamplingMode
from .estimator import (ChiEstimator, CriticalPointEstimator, PcEstimate, chi_estimate,
                        estimate_pc, minimax_thresholds, monotonicity_report)
from .exploration import (ClusterReport, ExplorationBudget, SurvivalEstimate, Termination,
                          explore, layer_radii, run_survival_trials, survival_curve,
                          survival_prob)
from .lattice import (Explicit, FiniteGrid, GraphSpec, Hex, Ladder, OrientedZ, ParallelSplit,
                      SquareZ2, make_ladder, parse_graph, split_vertical)

__version__ = "0.1.0"

__all__ = [
    "BadBlock", "ChiEstimator", "ClusterReport", "CouplingTrace", "CriticalPointEstimator",
    "DomainError", "EnvParams", "Explicit", "ExplorationBudget", "FiniteGrid", "GraphSpec",
    "Hex", "Ladder", "LayerType", "LayeredEnv", "OrientedZ", "ParallelSplit", "PcEstimate",
    "SamplingMode", "SquareZ2", "SurvivalEstimate", "Termination", "Verdict",
    "block_crossing_prob", "chi_estimate", "critical_layers_experiment",
    "crossing_decay_check", "estimate_pc", "explore", "f", "f_layered", "growth_ratio_check",
    "layer_radii", "locate_bad_blocks", "make_ladder", "minimax_thresholds",
    "monotonicity_report", "oracle_comparison", "parse_graph", "run_coupling",
    "run_coupling_bond", "run_coupling_site", "run_survival_trials", "split_vertical",
    "subcritical_bound", "survival_curve", "survival_prob", "verify_witness",
]
