"""Submodular influence cascades and the greedy adaptivity gap.

Triggering models (independent cascade, linear threshold and per-vertex
mixtures) and the general threshold model, exact and Monte Carlo influence
evaluation, non-adaptive and adaptive greedy seeding under full-adoption and
myopic feedback, brute-force optimal oracles, and the worst-case instance
generators.
"""
from .diffusion import (
    IC, LT, EdgeStatus, Kind, ModelSpec, Realization, ThresholdRealization, cascade, gtm_cascade,
    make_model, original_icm_process, original_ltm_process, sample_realization, sample_thresholds,
)
from .errors import *  # noqa: F401,F403
from .feedback import (
    ConditionedModel, LevelRealization, PartialRealization, condition_model, feedback,
    full_adoption_feedback, gtm_condition, myopic_feedback,
)
from .graph import WeightedDigraph, build_graph, expand_weight_gadget, total_weight
from .harness import GapReport, measure_gap, run_experiment
from .instances import (
    gen_icm_tight, gen_ltm_tight, gen_mixture, gen_random, gen_tree_prescribed, tree_budget,
)
from .io import load_instance, save_instance
from .policies import (
    AdaptiveGreedy, FixedPolicy, RiskFree, adaptive_values_exact, greedy_nonadaptive,
    optimal_adaptive_exact, optimal_nonadaptive_exact, run_policy, sigma_adaptive,
)
from .rng import RngStream
from .sigma import EstimateCI, conditional_sigma, sigma_exact, sigma_mc

__version__ = "0.1.0"
