"""Diversified contextual combinatorial bandit: DPP slates, variational
Thompson sampling, baseline policies, offline replay, and regret simulation."""

from .catalog import ItemCatalog, jaccard_similarity
from .dpp import (
    Kernel,
    Slate,
    build_kernel,
    exhaustive_map,
    greedy_map,
    slate_probability,
    subset_log_det,
)
from .exceptions import DataFormatError, InputError, NumericError
from .policies import CandidatePool, Policy, PolicyConfig, make_policy
from .posterior import PosteriorState, VariationalAux, lambda_of_xi, sample_theta, update

__version__ = "0.1.0"

__all__ = [
    "ItemCatalog",
    "jaccard_similarity",
    "Kernel",
    "Slate",
    "build_kernel",
    "subset_log_det",
    "slate_probability",
    "greedy_map",
    "exhaustive_map",
    "PosteriorState",
    "VariationalAux",
    "lambda_of_xi",
    "update",
    "sample_theta",
    "PolicyConfig",
    "CandidatePool",
    "Policy",
    "make_policy",
    "InputError",
    "NumericError",
    "DataFormatError",
    "__version__",
]
