"""Consensus dynamics and consensus-based optimization for atomic measures in W2."""

from .barycenter import (BarycenterProblem, BarycenterResult, barycenter_functional,
                         free_support_barycenter, mccann_pair_barycenter, normalize_weights)
from .cbo import (CboConfig, GibbsWeights, RunRecord, W2ToTarget, cbo_step, gibbs_weights,
                  initial_ensemble, make_target, run_cbo)
from .dynamics import (ConsensusConfig, TrajectoryRecord, consensus_step, ensemble_diameter,
                       run_consensus)
from .measures import (AtomicMeasure, Ensemble, convex_hull_contains, merge_atoms, read_measure,
                       support_diameter, uniform_measure, write_measure)
from .ot import Coupling, TransportResult, cost_matrix, displacement_interpolation, solve_ot, w2

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure", "Ensemble", "uniform_measure", "support_diameter", "convex_hull_contains",
    "merge_atoms", "read_measure", "write_measure",
    "Coupling", "TransportResult", "cost_matrix", "solve_ot", "w2", "displacement_interpolation",
    "BarycenterProblem", "BarycenterResult", "normalize_weights", "barycenter_functional",
    "free_support_barycenter", "mccann_pair_barycenter",
    "ConsensusConfig", "TrajectoryRecord", "consensus_step", "run_consensus", "ensemble_diameter",
    "CboConfig", "RunRecord", "W2ToTarget", "GibbsWeights", "gibbs_weights", "initial_ensemble",
    "cbo_step", "run_cbo", "make_target",
]
