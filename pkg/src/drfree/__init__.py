"""Distributionally robust free-energy decision engine and navigation benchmark."""

from .ambiguity import (
    AmbiguityCost,
    AmbiguitySpec,
    Branch,
    InnerProblem,
    LikelihoodRatio,
    compute_m,
    cost_of_ambiguity,
    dual_diagnostics,
    eval_v_alpha,
    oracle_inner_max,
    oracle_inner_max_with_error,
    worst_case_ratio,
    zero_radius_limit,
)
from .densities import (
    DiscreteDensity,
    GaussianDensity,
    density_from_json,
    kl_discrete,
    kl_gaussian,
    log_pdf,
    log_sum_exp,
    sample,
)
from .rng import Rng

__version__ = "0.1.0"

__all__ = [
    "AmbiguityCost",
    "AmbiguitySpec",
    "Branch",
    "DiscreteDensity",
    "GaussianDensity",
    "InnerProblem",
    "LikelihoodRatio",
    "Rng",
    "compute_m",
    "cost_of_ambiguity",
    "density_from_json",
    "dual_diagnostics",
    "eval_v_alpha",
    "kl_discrete",
    "kl_gaussian",
    "log_pdf",
    "log_sum_exp",
    "oracle_inner_max",
    "oracle_inner_max_with_error",
    "sample",
    "worst_case_ratio",
    "zero_radius_limit",
    "__version__",
]
