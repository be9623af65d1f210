"""Bayesian-network parameter learning from incomplete data with threshold EM."""

from .bounds import ParameterBounds, compute_bounds, family_consistency, virtual_frequencies
from .dataio import Dataset, forward_sample, mask_mcar, missingness_rate, parse_dataset, parse_network
from .em import LearnConfig, LearnResult, e_step, learn, m_step, normalize_rows, regularize, run
from .estimators import (
    SufficientStatistics,
    count_complete,
    map_estimate,
    ml_estimate,
    posterior_mean_estimate,
)
from .inference import family_posterior, marginal, record_log_likelihood
from .model import (
    MISSING,
    NetworkStructure,
    Node,
    ParameterSet,
    PriorSpec,
    joint_probability,
    parent_config_index,
    parent_values_of,
    validate_network,
)

__all__ = [
    "MISSING",
    "Dataset",
    "LearnConfig",
    "LearnResult",
    "NetworkStructure",
    "Node",
    "ParameterBounds",
    "ParameterSet",
    "PriorSpec",
    "SufficientStatistics",
    "compute_bounds",
    "count_complete",
    "e_step",
    "family_consistency",
    "family_posterior",
    "forward_sample",
    "joint_probability",
    "learn",
    "m_step",
    "map_estimate",
    "marginal",
    "mask_mcar",
    "missingness_rate",
    "ml_estimate",
    "normalize_rows",
    "parent_config_index",
    "parent_values_of",
    "parse_dataset",
    "parse_network",
    "posterior_mean_estimate",
    "record_log_likelihood",
    "regularize",
    "run",
    "validate_network",
    "virtual_frequencies",
]
