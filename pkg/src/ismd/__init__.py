"""Interacting stochastic mirror descent: particle ensembles of noisy
mirror-descent iterates coupled through a doubly-stochastic graph, plus the
benchmark problems, metrics, bound calculators and verification oracles
used to study them."""

from .mirror import (
    MirrorMap,
    entropy_map,
    euclidean_map,
    grad_conjugate,
    bregman,
    lipschitz_of_conjugate,
    phi_diameter,
)
from .graph import (
    InteractionGraph,
    mean_field,
    erdos_renyi,
    disconnected,
    algebraic_connectivity,
    interaction_drift,
)
from .objective import (
    LeastSquaresProblem,
    TrafficProblem,
    gen_least_squares,
    gen_traffic,
)
from .dynamics import (
    IntegratorConfig,
    ParticleEnsemble,
    Schedule,
    initialize,
    make_ensemble,
    run,
    step,
)
from .metrics import RunTrace, fluctuation_stats, time_to_threshold, variance_reduction_ratio
from .bounds import BoundInputs, fluctuation_bound, smd_convex_bound
from .oracle import MinimizerCertificate, OUStationary, certify_minimizer, ou_stationary

__version__ = "0.1.0"

__all__ = [
    "MirrorMap", "entropy_map", "euclidean_map", "grad_conjugate", "bregman",
    "lipschitz_of_conjugate", "phi_diameter",
    "InteractionGraph", "mean_field", "erdos_renyi", "disconnected",
    "algebraic_connectivity", "interaction_drift",
    "LeastSquaresProblem", "TrafficProblem", "gen_least_squares", "gen_traffic",
    "IntegratorConfig", "ParticleEnsemble", "Schedule", "initialize",
    "make_ensemble", "run", "step",
    "RunTrace", "fluctuation_stats", "time_to_threshold", "variance_reduction_ratio",
    "BoundInputs", "fluctuation_bound", "smd_convex_bound",
    "MinimizerCertificate", "OUStationary", "certify_minimizer", "ou_stationary",
]
