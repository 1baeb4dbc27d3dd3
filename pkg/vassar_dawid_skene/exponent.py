"""Error-exponent functionals of the Dawid-Skene model.

For a pair of labels (g, h) the per-worker Chernoff information is

    C(g, h) = -min_{0 <= t <= 1} (1/m) * f(t),
    f(t)    = sum_i log sum_l pi_gl^(i)^(1-t) * pi_hl^(i)^t,

and the minimax exponent is I(pi) = min_{g != h} C(g, h). f is strictly
convex with f(0) = f(1) = 0 as soon as one worker distinguishes g from h,
so the minimiser is unique and interior.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Dict, List, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .exceptions import ExponentDomainError, ValidationError
from .model import OneCoinPool, WorkerPool

logger = logging.getLogger(__name__)

EXPERT_ALPHA = 0.01     # Margin defining the expert set on the hardest pair
GOLDEN_XTOL = 1e-10     # Golden-section stopping width on [0, 1]
DISTINGUISH_TOL = 1e-12  # Rows closer than this carry no information
J_T_MIN = 1e-6          # Left end of the majority-vote search domain
J_XATOL = 1e-12
TIE_TOL = 1e-12         # Pair values closer than this count as tied

OneCoinLike = Union[OneCoinPool, np.ndarray, List[float], Tuple[float, ...]]


@dataclass(frozen=True)
class PairChernoff:
    """Chernoff information between rows g and h, averaged over workers."""

    g: int
    h: int
    t_star: float
    value: float

    def to_dict(self) -> Dict[str, float]:
        return {"g": self.g, "h": self.h, "t_star": self.t_star, "value": self.value}


@dataclass(frozen=True)
class ExponentReport:
    """
    Minimax exponent of a pool together with its assumption diagnostics.

    Attributes:
        i_pi (float): I(pi), nats per worker.
        pairs (Tuple[PairChernoff, ...]): Every pair g < h in lexicographic order.
        argmin_pair (Tuple[int, int]): Hardest pair (a, b).
        rho_m (float): Smallest confusion entry over all workers.
        expert_set_size (int): Workers beating the hardest pair by factor 1 + alpha.
        m (int): Number of workers.
        k (int): Number of labels.
    """

    i_pi: float
    pairs: Tuple[PairChernoff, ...]
    argmin_pair: Tuple[int, int]
    rho_m: float
    expert_set_size: int
    m: int
    k: int

    def upper_bound(self) -> float:
        """Per-item error bound (k - 1) * exp(-m * I(pi)) of the oracle MLE."""
        return (self.k - 1) * math.exp(-self.m * self.i_pi)

    def to_dict(self) -> dict:
        return {
            "i_pi": self.i_pi,
            "pairs": [pair.to_dict() for pair in self.pairs],
            "argmin_pair": list(self.argmin_pair),
            "rho_m": self.rho_m,
            "expert_set_size": self.expert_set_size,
        }


def _pair_rows(pool: WorkerPool, g: int, h: int) -> Tuple[np.ndarray, np.ndarray]:
    for label in (g, h):
        if not 1 <= label <= pool.k:
            raise ValidationError(f"Label {label} outside 1..{pool.k}")
    if g == h:
        raise ValidationError(f"Chernoff information needs two distinct labels, got {g}, {h}")
    return pool.tensor[:, g - 1, :], pool.tensor[:, h - 1, :]


def _require_positive(rows_g: np.ndarray, rows_h: np.ndarray, g: int, h: int) -> None:
    if rows_g.min() <= 0.0 or rows_h.min() <= 0.0:
        raise ExponentDomainError(
            f"Rows {g} and {h} contain zero probabilities; "
            "smooth the pool with smooth_confusion() first"
        )


def _pair_objective(rows_g: np.ndarray, rows_h: np.ndarray) -> Callable[[float], float]:
    log_g = np.log(rows_g)
    log_h = np.log(rows_h)

    def f(t: float) -> float:
        return float(np.sum(logsumexp((1.0 - t) * log_g + t * log_h, axis=1)))

    return f


def log_bt(pool: WorkerPool, g: int, h: int, t: float) -> float:
    """
    Evaluate f(t) = sum_i log B_t(pi_g*^(i), pi_h*^(i)) in the log domain.

    At the end points the row sums are used directly, so zero entries are
    allowed there.

    Args:
        pool: Worker pool.
        g: First label (1-based).
        h: Second label (1-based).
        t: Interpolation exponent in [0, 1].

    Returns:
        float: f(t), which is <= 0 on [0, 1].

    Raises:
        ValidationError: If t or the labels are out of range.
        ExponentDomainError: If an involved row has a zero entry and 0 < t < 1.
    """
    rows_g, rows_h = _pair_rows(pool, g, h)
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return float(np.sum(np.log(rows_g.sum(axis=1))))
    if t == 1.0:
        return float(np.sum(np.log(rows_h.sum(axis=1))))
    _require_positive(rows_g, rows_h, g, h)
    return _pair_objective(rows_g, rows_h)(t)


def chernoff_pair(pool: WorkerPool, g: int, h: int) -> PairChernoff:
    """
    Compute C(pi_g*, pi_h*) by golden-section search over t in [0, 1].

    When no worker distinguishes g from h the value is 0 and t_star is 0.5
    by convention.

    Raises:
        ExponentDomainError: If an involved row has a zero entry.
    """
    rows_g, rows_h = _pair_rows(pool, g, h)
    if np.all(np.abs(rows_g - rows_h) <= DISTINGUISH_TOL):
        return PairChernoff(g, h, 0.5, 0.0)
    _require_positive(rows_g, rows_h, g, h)

    f = _pair_objective(rows_g, rows_h)
    f_mid = f(0.5)
    if not f_mid < min(f(0.0), f(1.0)):
        # Rows differ below floating-point resolution of f.
        return PairChernoff(g, h, 0.5, max(0.0, -f_mid / pool.m))

    result = minimize_scalar(f, bracket=(0.0, 0.5, 1.0), method="golden",
                             options={"xtol": GOLDEN_XTOL})
    pair = PairChernoff(g, h, float(result.x), max(0.0, -float(result.fun) / pool.m))
    logger.debug("C(%d, %d) = %.12g at t = %.12g", g, h, pair.value, pair.t_star)
    return pair


def minimax_exponent(pool: WorkerPool, threads: int = 1) -> ExponentReport:
    """
    Compute I(pi) over all label pairs, plus the rho_m and expert-set diagnostics.

    Ties for the hardest pair go to the lexicographically smallest (g, h).

    Args:
        pool: Worker pool with strictly positive confusion entries.
        threads: Number of pairs evaluated concurrently.

    Returns:
        ExponentReport: The exponent and its diagnostics.

    Raises:
        ExponentDomainError: If the pool has a zero entry.
    """
    if not pool.is_strictly_positive:
        raise ExponentDomainError(
            "Pool contains zero probabilities; smooth it with smooth_confusion() first"
        )
    label_pairs = list(combinations(range(1, pool.k + 1), 2))
    if threads > 1 and len(label_pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            pairs = list(executor.map(lambda gh: chernoff_pair(pool, *gh), label_pairs))
    else:
        pairs = [chernoff_pair(pool, g, h) for g, h in label_pairs]

    best = pairs[0]
    for pair in pairs[1:]:
        if pair.value < best.value - TIE_TOL:
            best = pair
    a, b = best.g - 1, best.h - 1
    t = pool.tensor
    experts = (t[:, a, a] >= (1.0 + EXPERT_ALPHA) * t[:, a, b]) & (
        t[:, b, b] >= (1.0 + EXPERT_ALPHA) * t[:, b, a]
    )
    return ExponentReport(
        i_pi=best.value,
        pairs=tuple(pairs),
        argmin_pair=(best.g, best.h),
        rho_m=pool.min_entry,
        expert_set_size=int(np.count_nonzero(experts)),
        m=pool.m,
        k=pool.k,
    )


def upper_bound(pool: WorkerPool) -> float:
    """Per-item oracle-MLE error bound (k - 1) * exp(-m * I(pi))."""
    return minimax_exponent(pool).upper_bound()


def _accuracies(p: OneCoinLike) -> np.ndarray:
    accuracies = p.p if isinstance(p, OneCoinPool) else OneCoinPool(np.asarray(p)).p
    if accuracies.min() <= 0.0 or accuracies.max() >= 1.0:
        raise ExponentDomainError("One-coin accuracies must lie strictly inside (0, 1)")
    return accuracies


def renyi_half_divergence(p: OneCoinLike) -> np.ndarray:
    """Per-worker Renyi divergence of order 1/2 between Bernoulli(p) and Bernoulli(1 - p)."""
    accuracies = _accuracies(p)
    return -2.0 * np.log(2.0 * np.sqrt(accuracies * (1.0 - accuracies)))


def one_coin_exponent(p: OneCoinLike) -> float:
    """
    I(p) = -(1/m) * sum_i log(2 * sqrt(p_i * (1 - p_i))).

    Symmetric under p_i -> 1 - p_i: an adversarial worker is as informative
    as its mirror image once its labels are inverted.

    Raises:
        ExponentDomainError: If some p_i is 0 or 1.
    """
    return max(0.0, float(np.mean(renyi_half_divergence(p))) / 2.0)


def majority_vote_exponent(p: OneCoinLike) -> Tuple[float, float]:
    """
    J(p) = -min_{t in (0, 1]} (1/m) * sum_i log(p_i * t + (1 - p_i) / t).

    The search runs over [J_T_MIN, 1]; the objective is convex in log t,
    so bounded Brent search plus an explicit check of both end points finds
    the global minimum.

    Returns:
        Tuple[float, float]: (t_star, J(p)).

    Raises:
        ExponentDomainError: If some p_i is 0 or 1.
    """
    accuracies = _accuracies(p)

    def objective(t: float) -> float:
        return float(np.mean(np.log(accuracies * t + (1.0 - accuracies) / t)))

    result = minimize_scalar(objective, bounds=(J_T_MIN, 1.0), method="bounded",
                             options={"xatol": J_XATOL})
    candidates = [(objective(1.0), 1.0), (objective(J_T_MIN), J_T_MIN),
                  (float(result.fun), float(result.x))]
    best_value, t_star = min(candidates)
    return t_star, max(0.0, -best_value)


def majority_vote_upper_bound(p: OneCoinLike) -> float:
    """Chernoff bound exp(-m * J(p)) on the per-item majority-vote error."""
    accuracies = _accuracies(p)
    _, j_p = majority_vote_exponent(accuracies)
    return math.exp(-accuracies.size * j_p)


def required_workers(i_pi: float, epsilon: float) -> int:
    """
    Leading-order number of workers for a target error: ceil(log(1/epsilon) / I).

    Returns 0 for epsilon = 1 (no requirement) and at least 1 otherwise.

    Raises:
        ExponentDomainError: If i_pi <= 0 (no finite crowd suffices).
        ValidationError: If epsilon is outside (0, 1].
    """
    if not i_pi > 0.0:
        raise ExponentDomainError(f"Exponent must be positive, got {i_pi}; no finite m suffices")
    if not 0.0 < epsilon <= 1.0:
        raise ValidationError(f"Target error must lie in (0, 1], got {epsilon}")
    if epsilon == 1.0:
        return 0
    ratio = math.log(1.0 / epsilon) / i_pi
    return max(1, math.ceil(ratio - 1e-12))
