"""Label-aggregation rules for crowdsourced labels.

Majority voting, the oracle and plug-in maximum-likelihood rules, the
Dawid-Skene EM algorithm and the one-coin method-of-moments estimator.
Ties are always broken towards the smallest label.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .exceptions import DegenerateEstimateError, ExponentDomainError, ValidationError
from .model import GroundTruth, LabelMatrix, OneCoinPool, WorkerPool

logger = logging.getLogger(__name__)

DEFAULT_SMOOTHING = 0.5        # Additive count smoothing used by EM
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-8             # On the per-item log-likelihood gain
MV_INIT_CONFIDENCE = 0.9       # Mass given to the majority label in the EM start
DEGENERACY_THRESHOLD = 0.1     # Minimum |2 * gamma_hat - 1| for the moment estimator
POSTERIOR_TOL = 1e-9


class Rule(str, Enum):
    """Aggregation rules understood by aggregate_labels()."""

    MV = "mv"
    ORACLE = "oracle"
    PLUGIN = "plugin"
    EM = "em"
    ONECOIN_PLUGIN = "onecoin-plugin"

    @classmethod
    def parse(cls, value: Union[str, "Rule"]) -> "Rule":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(rule.value for rule in cls)
            raise ValidationError(f"Unknown aggregation rule {value!r}. Use one of: {names}")


class EstimatedPool(WorkerPool):
    """Estimated confusion matrices; strictly positive so every log is finite."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if not self.is_strictly_positive:
            raise ValidationError("Estimated confusion matrices must be strictly positive")


@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    """``probs[j][g]`` is the current estimate of P(y_j = g + 1)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise ValidationError(f"Posterior must be an n x k grid with k >= 2, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0:
            raise ValidationError("Posterior entries must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > POSTERIOR_TOL):
            raise ValidationError("Posterior rows must sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return int(self.probs.shape[0])

    @property
    def k(self) -> int:
        return int(self.probs.shape[1])

    @classmethod
    def from_labels(cls, labels: GroundTruth, k: int, confidence: float = 1.0) -> "PosteriorMatrix":
        """Put ``confidence`` on each given label and spread the rest uniformly."""
        labels.check_k(k)
        probs = np.full((labels.n, k), (1.0 - confidence) / (k - 1))
        probs[np.arange(labels.n), labels.y - 1] = confidence
        return cls(probs)

    @classmethod
    def uniform(cls, n: int, k: int) -> "PosteriorMatrix":
        return cls(np.full((n, k), 1.0 / k))

    def hard_labels(self) -> GroundTruth:
        return GroundTruth(np.argmax(self.probs, axis=1) + 1)


class EMResult(NamedTuple):
    estimate: EstimatedPool
    posterior: PosteriorMatrix
    labels: GroundTruth
    iters: int
    log_likelihoods: Tuple[float, ...]


class OneCoinEstimate(NamedTuple):
    p_hat: np.ndarray
    gamma_hat: float
    signal_strength: float  # (1/m) * sum (2 p_hat - 1)^2, reported only

    def to_pool(self) -> EstimatedPool:
        return EstimatedPool(OneCoinPool(self.p_hat).to_worker_pool().workers)


class AggregationOutcome(NamedTuple):
    labels: GroundTruth
    rule: Rule
    iters: Optional[int] = None
    gamma_hat: Optional[float] = None
    signal_strength: Optional[float] = None
    estimate: Optional[WorkerPool] = None


def _one_hot(labels: LabelMatrix) -> np.ndarray:
    """(m, n, k) indicator of X_ij = h; missing entries have an all-zero row."""
    return (labels.entries[:, :, None] == np.arange(1, labels.k + 1)).astype(float)


def _argmax_labels(scores: np.ndarray) -> GroundTruth:
    return GroundTruth(np.argmax(scores, axis=1) + 1)


def _check_shapes(labels: LabelMatrix, pool: WorkerPool) -> None:
    if pool.m != labels.m:
        raise ValidationError(f"Pool has {pool.m} workers but labels come from {labels.m}")
    if pool.k != labels.k:
        raise ValidationError(f"Pool has k={pool.k} but labels use k={labels.k}")


def log_likelihoods(labels: LabelMatrix, pool: WorkerPool) -> np.ndarray:
    """
    Per-item log-likelihood of every candidate label.

    Args:
        labels: Complete label matrix.
        pool: Confusion matrices with strictly positive entries.

    Returns:
        np.ndarray: ``(n, k)`` array, entry ``[j, g]`` = sum_i log pi_{g+1, X_ij}.

    Raises:
        ValidationError: On shape mismatch or missing labels.
        ExponentDomainError: If the pool has a zero entry.
    """
    _check_shapes(labels, pool)
    labels.require_complete()
    if not pool.is_strictly_positive:
        raise ExponentDomainError(
            "Pool contains zero probabilities; smooth it with smooth_confusion() first"
        )
    log_pi = np.log(pool.tensor)
    workers = np.arange(labels.m)[:, None]
    return log_pi[workers, :, labels.entries - 1].sum(axis=0)


def majority_vote(labels: LabelMatrix, num_classes: Optional[int] = None) -> GroundTruth:
    """
    Per-item plurality vote; ties go to the smallest label.

    Missing entries cast no vote. ``num_classes`` restricts the candidate
    labels to ``1..num_classes`` (used after remapping missing labels).
    """
    counts = np.stack([np.count_nonzero(labels.entries == g, axis=0)
                       for g in range(1, labels.k + 1)], axis=1)
    if num_classes is not None:
        counts = counts[:, :num_classes]
    return _argmax_labels(counts)


def oracle_mle(labels: LabelMatrix, pool: WorkerPool) -> GroundTruth:
    """Maximum-likelihood labels given the true confusion matrices."""
    return _argmax_labels(log_likelihoods(labels, pool))


def plugin_mle(labels: LabelMatrix, estimate: WorkerPool) -> GroundTruth:
    """Maximum-likelihood labels with estimated confusion matrices plugged in."""
    return _argmax_labels(log_likelihoods(labels, estimate))


def smooth_confusion(raw_counts: np.ndarray, smoothing: float) -> EstimatedPool:
    """
    Turn per-worker count grids into strictly positive confusion matrices.

    pi_hat_gh = (count_gh + smoothing) / (sum_h count_gh + k * smoothing)

    Args:
        raw_counts: ``(m, k, k)`` non-negative (possibly fractional) counts.
        smoothing: Additive pseudo-count, must be positive.

    Returns:
        EstimatedPool: Smoothed estimate.
    """
    counts = np.asarray(raw_counts, dtype=float)
    if not smoothing > 0.0:
        raise ValidationError(f"Smoothing must be positive, got {smoothing}")
    if counts.ndim != 3 or counts.shape[1] != counts.shape[2]:
        raise ValidationError(f"Counts must have shape (m, k, k), got {counts.shape}")
    if counts.min() < 0.0:
        raise ValidationError("Counts must be non-negative")
    smoothed = counts + smoothing
    return EstimatedPool.from_array(smoothed / smoothed.sum(axis=2, keepdims=True))


def em_m_step(labels: LabelMatrix, posterior: PosteriorMatrix,
              smoothing: float = DEFAULT_SMOOTHING) -> EstimatedPool:
    """Re-estimate worker abilities from soft label counts."""
    if posterior.n != labels.n or posterior.k != labels.k:
        raise ValidationError(
            f"Posterior shape ({posterior.n}, {posterior.k}) does not match "
            f"labels ({labels.n} items, k={labels.k})"
        )
    counts = np.einsum("jg,ijh->igh", posterior.probs, _one_hot(labels))
    return smooth_confusion(counts, smoothing)


def _log_prior(prior: Optional[Sequence[float]], k: int) -> np.ndarray:
    if prior is None:
        return np.full(k, -np.log(k))
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (k,) or prior.min() < 0.0 or abs(prior.sum() - 1.0) > 1e-9:
        raise ValidationError(f"Prior must be a probability vector of length {k}")
    with np.errstate(divide="ignore"):
        return np.log(prior)


def _e_step(labels: LabelMatrix, estimate: WorkerPool,
            log_prior: np.ndarray) -> Tuple[PosteriorMatrix, float]:
    joint = log_likelihoods(labels, estimate) + log_prior
    norm = logsumexp(joint, axis=1, keepdims=True)
    return PosteriorMatrix(np.exp(joint - norm)), float(norm.sum())


def em_e_step(labels: LabelMatrix, estimate: WorkerPool,
              prior: Optional[Sequence[float]] = None) -> PosteriorMatrix:
    """
    Posterior over true labels given estimated confusion matrices.

    Args:
        labels: Complete label matrix.
        estimate: Strictly positive confusion matrices.
        prior: Class prior (uniform when omitted); zero entries exclude a class.

    Returns:
        PosteriorMatrix: Normalised per-item posterior.
    """
    posterior, _ = _e_step(labels, estimate, _log_prior(prior, labels.k))
    return posterior


def em_run(labels: LabelMatrix, init: Union[PosteriorMatrix, str, None] = None,
           max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
           smoothing: float = DEFAULT_SMOOTHING,
           prior: Optional[Sequence[float]] = None) -> EMResult:
    """
    Run Dawid-Skene EM from an initial posterior.

    Each iteration is an M-step followed by an E-step. The tracked objective
    is the observed-data log-likelihood plus the smoothing term
    ``smoothing * sum log pi_hat``; with additive smoothing the M-step is its
    exact maximiser, so the trace never decreases.

    Args:
        labels: Complete label matrix.
        init: Starting posterior; None for the majority-vote soft start,
            ``"onecoin"`` for the posterior under the one-coin moment estimate.
        max_iters: Iteration cap.
        tol: Stop once the per-item objective gain drops below this.
        smoothing: Additive count smoothing of the M-step.
        prior: Class prior of the E-step.

    Returns:
        EMResult: Final estimate, posterior, hard labels, iteration count and
        objective trace.
    """
    labels.require_complete()
    if max_iters < 1:
        raise ValidationError(f"max_iters must be >= 1, got {max_iters}")
    log_prior = _log_prior(prior, labels.k)

    if init is None:
        posterior = PosteriorMatrix.from_labels(majority_vote(labels), labels.k,
                                                MV_INIT_CONFIDENCE)
    elif isinstance(init, str):
        if init != "onecoin":
            raise ValidationError(f"Unknown EM initialisation {init!r}")
        posterior, _ = _e_step(labels, one_coin_estimate(labels).to_pool(), log_prior)
    else:
        posterior = init

    trace = []
    iters = 0
    estimate = None
    for iters in range(1, max_iters + 1):
        estimate = em_m_step(labels, posterior, smoothing)
        posterior, data_ll = _e_step(labels, estimate, log_prior)
        trace.append(data_ll + smoothing * float(np.log(estimate.tensor).sum()))
        logger.debug("EM iteration %d: log-likelihood %.12g", iters, trace[-1])
        if len(trace) > 1 and (trace[-1] - trace[-2]) / labels.n < tol:
            break
    return EMResult(estimate, posterior, posterior.hard_labels(), iters, tuple(trace))


def one_coin_estimate(labels: LabelMatrix) -> OneCoinEstimate:
    """
    Method-of-moments accuracies for the binary one-coin model.

    gamma_hat is the fraction of items whose majority-vote label is 2, and

        p_hat_i = (mean_j 1{X_ij = 2} - (1 - gamma_hat)) / (2 * gamma_hat - 1),

    clamped to [1/(2n), 1 - 1/(2n)]. If the average of 2 p_hat - 1 is
    negative all accuracies are flipped, fixing the label-switching sign.

    Raises:
        ValidationError: If k != 2 or labels are missing.
        DegenerateEstimateError: If |2 * gamma_hat - 1| < DEGENERACY_THRESHOLD.
    """
    if labels.k != 2:
        raise ValidationError(f"The one-coin estimator needs k = 2, got k={labels.k}")
    labels.require_complete()
    gamma_hat = float(np.mean(majority_vote(labels).y == 2))
    denominator = 2.0 * gamma_hat - 1.0
    if abs(denominator) < DEGENERACY_THRESHOLD:
        raise DegenerateEstimateError(
            f"|2 * gamma_hat - 1| = {abs(denominator):.4f} is below {DEGENERACY_THRESHOLD}; "
            "class proportions are too balanced for the moment estimator"
        )
    share_of_two = np.mean(labels.entries == 2, axis=1)
    p_hat = (share_of_two - (1.0 - gamma_hat)) / denominator
    floor = 1.0 / (2.0 * labels.n)
    p_hat = np.clip(p_hat, floor, 1.0 - floor)
    if np.mean(2.0 * p_hat - 1.0) < 0.0:
        p_hat = 1.0 - p_hat
    signal = float(np.mean((2.0 * p_hat - 1.0) ** 2))
    return OneCoinEstimate(p_hat, gamma_hat, signal)


def plugin_log_deviation(estimate: WorkerPool, pool: WorkerPool) -> float:
    """max_g sum_i max_h |log pi_hat_gh - log pi_gh|, the plug-in accuracy statistic."""
    if estimate.m != pool.m or estimate.k != pool.k:
        raise ValidationError("Estimate and pool must have the same shape")
    if not (estimate.is_strictly_positive and pool.is_strictly_positive):
        raise ExponentDomainError("Log deviation needs strictly positive matrices")
    gap = np.abs(np.log(estimate.tensor) - np.log(pool.tensor))
    return float(gap.max(axis=2).sum(axis=0).max())


def aggregate_labels(rule: Union[Rule, str], labels: LabelMatrix,
                     pool: Optional[WorkerPool] = None,
                     estimate: Optional[WorkerPool] = None,
                     smoothing: float = DEFAULT_SMOOTHING,
                     max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
                     prior: Optional[Sequence[float]] = None,
                     num_classes: Optional[int] = None) -> AggregationOutcome:
    """
    Apply one aggregation rule by name.

    ``plugin`` uses ``estimate`` when given; otherwise it plugs in the
    smoothed confusion counts against the majority-vote labels (a single
    EM step from a hard majority-vote start).

    Raises:
        ValidationError: If the rule needs a pool that was not supplied.
    """
    rule = Rule.parse(rule)
    if rule is Rule.MV:
        return AggregationOutcome(majority_vote(labels, num_classes), rule)
    if rule is Rule.ORACLE:
        if pool is None:
            raise ValidationError("The oracle rule needs the true worker pool")
        return AggregationOutcome(oracle_mle(labels, pool), rule)
    if rule is Rule.PLUGIN:
        if estimate is None:
            start = PosteriorMatrix.from_labels(majority_vote(labels, num_classes), labels.k)
            estimate = em_m_step(labels, start, smoothing)
        return AggregationOutcome(plugin_mle(labels, estimate), rule, estimate=estimate)
    if rule is Rule.EM:
        result = em_run(labels, max_iters=max_iters, tol=tol, smoothing=smoothing, prior=prior)
        return AggregationOutcome(result.labels, rule, iters=result.iters,
                                  estimate=result.estimate)
    fit = one_coin_estimate(labels)
    estimate = fit.to_pool()
    return AggregationOutcome(plugin_mle(labels, estimate), rule, gamma_hat=fit.gamma_hat,
                              signal_strength=fit.signal_strength, estimate=estimate)
