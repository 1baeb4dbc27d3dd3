"""
Vassar Dawid-Skene - error exponents and label aggregation for crowdsourcing.

This package simulates crowd workers under the Dawid-Skene model, computes the
minimax error exponent of a worker pool, aggregates noisy labels (majority
vote, oracle and plug-in MLE, EM, one-coin moments) and runs Monte Carlo
experiments that compare observed error decay with the predicted exponents.
"""

__version__ = "0.1.0"
__author__ = "Vassar Robotics"
__email__ = "hello@vassarrobotics.com"

from .model import (
    ConfusionMatrix,
    WorkerPool,
    OneCoinPool,
    GroundTruth,
    LabelMatrix,
    derive_seed,
    generate_labels,
    sample_truth,
    misclassification_rate,
    remap_missing,
)
from .exponent import (
    ExponentReport,
    PairChernoff,
    log_bt,
    chernoff_pair,
    minimax_exponent,
    upper_bound,
    one_coin_exponent,
    majority_vote_exponent,
    majority_vote_upper_bound,
    required_workers,
)
from .aggregate import (
    Rule,
    EstimatedPool,
    PosteriorMatrix,
    EMResult,
    majority_vote,
    oracle_mle,
    plugin_mle,
    smooth_confusion,
    em_m_step,
    em_e_step,
    em_run,
    one_coin_estimate,
    aggregate_labels,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    ExplicitPoolSpec,
    OneCoinSpec,
    run_experiment,
    fit_exponent,
    exact_error,
    estimate_error,
    verify_sample_size,
)
from .exceptions import (
    CrowdsourcingError,
    ValidationError,
    ExponentDomainError,
    DegenerateEstimateError,
    InsufficientDataError,
    EnumerationTooLargeError,
    ConfigError,
    InputFileError,
)

__all__ = [
    "ConfusionMatrix",
    "WorkerPool",
    "OneCoinPool",
    "GroundTruth",
    "LabelMatrix",
    "derive_seed",
    "generate_labels",
    "sample_truth",
    "misclassification_rate",
    "remap_missing",
    "ExponentReport",
    "PairChernoff",
    "log_bt",
    "chernoff_pair",
    "minimax_exponent",
    "upper_bound",
    "one_coin_exponent",
    "majority_vote_exponent",
    "majority_vote_upper_bound",
    "required_workers",
    "Rule",
    "EstimatedPool",
    "PosteriorMatrix",
    "EMResult",
    "majority_vote",
    "oracle_mle",
    "plugin_mle",
    "smooth_confusion",
    "em_m_step",
    "em_e_step",
    "em_run",
    "one_coin_estimate",
    "aggregate_labels",
    "ExperimentConfig",
    "ExperimentResult",
    "ExplicitPoolSpec",
    "OneCoinSpec",
    "run_experiment",
    "fit_exponent",
    "exact_error",
    "estimate_error",
    "verify_sample_size",
    "CrowdsourcingError",
    "ValidationError",
    "ExponentDomainError",
    "DegenerateEstimateError",
    "InsufficientDataError",
    "EnumerationTooLargeError",
    "ConfigError",
    "InputFileError",
]
