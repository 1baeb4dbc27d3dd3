"""Monte Carlo and exact-enumeration experiments on error exponents.

An experiment sweeps a grid of crowd sizes m. Crowds of different sizes are
prefixes of one worker stream, and the labels of a smaller crowd are the
first rows of the labels a larger crowd would produce, so every point of the
grid is simulated on comparable data.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from .aggregate import (
    DEFAULT_SMOOTHING,
    Rule,
    aggregate_labels,
    majority_vote,
    oracle_mle,
    plugin_log_deviation,
    plugin_mle,
)
from .exceptions import (
    ConfigError,
    EnumerationTooLargeError,
    ExponentDomainError,
    InsufficientDataError,
    ValidationError,
)
from .exponent import majority_vote_exponent, minimax_exponent, required_workers
from .io import read_pool
from .model import (
    GroundTruth,
    LabelMatrix,
    OneCoinPool,
    WorkerPool,
    derive_seed,
    generate_labels,
    misclassification_rate,
    sample_truth,
)

logger = logging.getLogger(__name__)

SAFETY_FACTOR = 1.3          # Multiplies the leading-order worker requirement
MIN_ERRORS_FOR_FIT = 10      # Grid points with fewer observed errors are not fitted
MIN_FIT_POINTS = 3
MAX_ENUMERATION = 10 ** 7    # Largest k**m handled by exact enumeration
ENUMERATION_CHUNK = 1 << 16
COLUMN_RULES = (Rule.MV, Rule.ORACLE, Rule.PLUGIN)
OPTIMAL_RULES = (Rule.ORACLE, Rule.PLUGIN, Rule.EM, Rule.ONECOIN_PLUGIN)

T = TypeVar("T")


def _parallel_map(fn: Callable[[int], T], items: Sequence[int], threads: int) -> List[T]:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# Worker streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExplicitPoolSpec:
    """A fixed pool; crowds of size m are its first m workers."""

    pool: WorkerPool

    @property
    def k(self) -> int:
        return self.pool.k

    @property
    def max_workers(self) -> Optional[int]:
        return self.pool.m

    def take(self, m: int) -> WorkerPool:
        if not 1 <= m <= self.pool.m:
            raise ConfigError(f"Requested {m} workers but the pool only has {self.pool.m}")
        return self.pool.prefix(m)

    def reference_pool(self) -> WorkerPool:
        return self.pool

    def to_dict(self) -> dict:
        return {"type": "explicit", "pool": self.pool.to_list()}


@dataclass(frozen=True)
class OneCoinSpec:
    """
    One-coin worker stream.

    Either ``p`` (a pattern repeated cyclically, e.g. ``(0.6, 0.95)``) or
    ``p_range`` (accuracies drawn uniformly from the range with ``seed``).
    """

    p: Optional[Tuple[float, ...]] = None
    p_range: Optional[Tuple[float, float]] = None
    seed: int = 0
    reference_size: int = 1000

    def __post_init__(self) -> None:
        if (self.p is None) == (self.p_range is None):
            raise ConfigError("A one-coin spec needs exactly one of 'p' or 'p_range'")
        if self.p is not None:
            if len(self.p) == 0 or any(not 0.0 <= v <= 1.0 for v in self.p):
                raise ConfigError("One-coin accuracies must lie in [0, 1]")
        else:
            if len(self.p_range) != 2:
                raise ConfigError(f"p_range needs two values, got {self.p_range}")
            low, high = self.p_range
            if not 0.0 <= low <= high <= 1.0:
                raise ConfigError(f"Invalid accuracy range {self.p_range}")

    @property
    def k(self) -> int:
        return 2

    @property
    def max_workers(self) -> Optional[int]:
        return None

    def accuracies(self, m: int) -> np.ndarray:
        if m < 1:
            raise ConfigError(f"Crowd size must be >= 1, got {m}")
        if self.p is not None:
            return np.resize(np.asarray(self.p, dtype=float), m)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        return rng.uniform(self.p_range[0], self.p_range[1], size=m)

    def take(self, m: int) -> WorkerPool:
        return OneCoinPool(self.accuracies(m)).to_worker_pool()

    def reference_pool(self) -> WorkerPool:
        size = len(self.p) if self.p is not None else self.reference_size
        return self.take(size)

    def to_dict(self) -> dict:
        if self.p is not None:
            return {"type": "one_coin", "p": list(self.p)}
        return {"type": "one_coin", "p_range": list(self.p_range), "seed": self.seed}


PoolSpec = Union[ExplicitPoolSpec, OneCoinSpec]


def pool_spec_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> PoolSpec:
    """
    Parse a pool specification.

    Accepted forms::

        {"type": "explicit", "pool": [[[...]]]}
        {"type": "explicit", "path": "pool.json"}
        {"type": "one_coin", "p": [0.6, 0.95]}
        {"type": "one_coin", "p_range": [0.6, 0.9], "seed": 3}

    Raises:
        ConfigError: If the specification is malformed.
    """
    if not isinstance(data, dict):
        raise ConfigError("pool_spec must be an object")
    kind = data.get("type")
    try:
        if kind == "explicit":
            if "path" in data:
                path = Path(data["path"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                return ExplicitPoolSpec(read_pool(path))
            return ExplicitPoolSpec(WorkerPool.from_array(data["pool"]))
        if kind == "one_coin":
            p = data.get("p")
            p_range = data.get("p_range")
            return OneCoinSpec(
                p=tuple(float(v) for v in p) if p is not None else None,
                p_range=tuple(float(v) for v in p_range) if p_range is not None else None,
                seed=int(data.get("seed", 0)),
            )
    except KeyError as e:
        raise ConfigError(f"pool_spec is missing {e}")
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid pool_spec: {e}")
    raise ConfigError(f"Unknown pool_spec type {kind!r}; use 'explicit' or 'one_coin'")


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """
    Monte Carlo sweep over crowd sizes.

    Attributes:
        pool_spec: Worker stream.
        m_grid: Strictly ascending crowd sizes.
        n: Items per trial.
        trials: Repetitions per crowd size.
        rules: Aggregation rules to compare.
        seed: Root seed; trial t uses seeds derived from (seed, t).
        class_prior: Prior the true labels are drawn from (uniform if None).
        smoothing: Count smoothing for the data-driven rules.
    """

    pool_spec: PoolSpec
    m_grid: Tuple[int, ...]
    n: int
    trials: int = 1
    rules: Tuple[Rule, ...] = (Rule.MV, Rule.ORACLE)
    seed: int = 0
    class_prior: Optional[Tuple[float, ...]] = None
    smoothing: float = DEFAULT_SMOOTHING

    def __post_init__(self) -> None:
        grid = tuple(int(m) for m in self.m_grid)
        if not grid:
            raise ConfigError("m_grid must not be empty")
        if grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"m_grid must be strictly ascending positive integers, got {grid}")
        limit = self.pool_spec.max_workers
        if limit is not None and grid[-1] > limit:
            raise ConfigError(f"m_grid reaches {grid[-1]} but the pool has {limit} workers")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        try:
            rules = tuple(Rule.parse(rule) for rule in self.rules)
        except ValidationError as e:
            raise ConfigError(str(e))
        if not rules:
            raise ConfigError("At least one rule is required")
        if self.class_prior is not None and len(self.class_prior) != self.pool_spec.k:
            raise ConfigError(f"class_prior must have {self.pool_spec.k} entries")
        object.__setattr__(self, "m_grid", grid)
        object.__setattr__(self, "rules", rules)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[Path] = None,
                  seed: Optional[int] = None) -> "ExperimentConfig":
        """Build a config from parsed JSON; ``seed`` overrides the file's seed."""
        if not isinstance(data, dict):
            raise ConfigError("Experiment config must be a JSON object")
        try:
            prior = data.get("class_prior")
            return cls(
                pool_spec=pool_spec_from_dict(data["pool_spec"], base_dir),
                m_grid=tuple(data["m_grid"]),
                n=int(data["n"]),
                trials=int(data.get("trials", 1)),
                rules=tuple(data.get("rules", ("mv", "oracle"))),
                seed=int(seed if seed is not None else data.get("seed", 0)),
                class_prior=tuple(float(v) for v in prior) if prior is not None else None,
                smoothing=float(data.get("smoothing", DEFAULT_SMOOTHING)),
            )
        except KeyError as e:
            raise ConfigError(f"Experiment config is missing {e}")
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid experiment config: {e}")

    def to_dict(self) -> dict:
        return {
            "pool_spec": self.pool_spec.to_dict(),
            "m_grid": list(self.m_grid),
            "n": self.n,
            "trials": self.trials,
            "rules": [rule.value for rule in self.rules],
            "seed": self.seed,
            "class_prior": list(self.class_prior) if self.class_prior is not None else None,
            "smoothing": self.smoothing,
        }


@dataclass(frozen=True)
class ExperimentRow:
    rule: Rule
    m: int
    trials: int
    n: int
    errors: int
    mean_error: float
    std_error: float
    predicted_exponent: Optional[float]
    plugin_deviation: Optional[float] = None


@dataclass(frozen=True)
class RuleFit:
    rule: Rule
    fitted_slope: Optional[float]
    points_used: int
    note: Optional[str] = None


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    rows: Tuple[ExperimentRow, ...]
    fits: Dict[Rule, RuleFit] = field(default_factory=dict)

    CSV_HEADER = ("rule", "m", "trials", "n", "mean_error", "std_error",
                  "predicted_exponent", "fitted_slope")

    def row(self, rule: Union[Rule, str], m: int) -> ExperimentRow:
        rule = Rule.parse(rule)
        for row in self.rows:
            if row.rule is rule and row.m == m:
                return row
        raise KeyError((rule.value, m))

    def csv_rows(self) -> List[tuple]:
        return [
            (row.rule.value, row.m, row.trials, row.n, row.mean_error, row.std_error,
             row.predicted_exponent, self.fits[row.rule].fitted_slope)
            for row in self.rows
        ]

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "fits": {
                rule.value: {
                    "fitted_slope": fit.fitted_slope,
                    "slope_defined": fit.fitted_slope is not None,
                    "points_used": fit.points_used,
                    "note": fit.note,
                }
                for rule, fit in self.fits.items()
            },
            "rows": [
                {
                    "rule": row.rule.value,
                    "m": row.m,
                    "errors": row.errors,
                    "mean_error": row.mean_error,
                    "std_error": row.std_error,
                    "predicted_exponent": row.predicted_exponent,
                    "plugin_deviation": row.plugin_deviation,
                }
                for row in self.rows
            ],
        }


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def fit_exponent(points: Iterable[Tuple[int, float]]) -> float:
    """
    Least-squares slope of log(mean_error) against m.

    Points with a zero error rate are ignored.

    Raises:
        InsufficientDataError: If fewer than 3 points have a positive error.
    """
    positive = [(float(m), float(e)) for m, e in points if e > 0.0]
    if len(positive) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"Need at least {MIN_FIT_POINTS} points with positive error, got {len(positive)}"
        )
    ms, errors = zip(*positive)
    slope, _ = np.polyfit(np.array(ms), np.log(np.array(errors)), 1)
    return float(slope)


def _predicted_exponent(rule: Rule, pool: WorkerPool) -> Optional[float]:
    try:
        if rule in OPTIMAL_RULES:
            return minimax_exponent(pool).i_pi
        if pool.is_one_coin():
            return majority_vote_exponent(pool.to_one_coin())[1]
    except ExponentDomainError:
        pass
    return None


def _plugin_deviation(estimate: Optional[WorkerPool], pool: WorkerPool) -> Optional[float]:
    if estimate is None:
        return None
    try:
        return plugin_log_deviation(estimate, pool)
    except ExponentDomainError:
        return None


def _binomial_std_error(errors: int, total: int) -> float:
    rate = errors / total
    return math.sqrt(rate * (1.0 - rate) / total)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """
    Simulate every (rule, m) cell of the configuration.

    Trial t draws its truth from ``derive_seed(seed, t, 0)`` and its labels
    from ``derive_seed(seed, t, 1)`` for every m, so trials are independent,
    the result is identical for any ``threads``, and all rules see the same
    data. Error counts are summed as integers.

    Args:
        config: Experiment configuration.
        threads: Trials simulated concurrently.

    Returns:
        ExperimentResult: Per-cell error rates and per-rule slope fits.
    """
    k = config.pool_spec.k
    rows = []
    for m in config.m_grid:
        pool = config.pool_spec.take(m)

        def run_trial(trial: int) -> List[Tuple[int, Optional[float]]]:
            truth = sample_truth(k, config.n, derive_seed(config.seed, trial, 0),
                                 config.class_prior)
            labels = generate_labels(pool, truth, derive_seed(config.seed, trial, 1))
            cells = []
            for rule in config.rules:
                outcome = aggregate_labels(rule, labels, pool=pool, smoothing=config.smoothing)
                deviation = None
                if rule in (Rule.PLUGIN, Rule.ONECOIN_PLUGIN):
                    deviation = _plugin_deviation(outcome.estimate, pool)
                cells.append((int(np.count_nonzero(outcome.labels.y != truth.y)), deviation))
            return cells

        per_trial = _parallel_map(run_trial, list(range(config.trials)), threads)
        total = config.n * config.trials
        for index, rule in enumerate(config.rules):
            errors = sum(cells[index][0] for cells in per_trial)
            deviations = [cells[index][1] for cells in per_trial if cells[index][1] is not None]
            rows.append(ExperimentRow(
                rule=rule,
                m=m,
                trials=config.trials,
                n=config.n,
                errors=errors,
                mean_error=errors / total,
                std_error=_binomial_std_error(errors, total),
                predicted_exponent=_predicted_exponent(rule, pool),
                plugin_deviation=float(np.mean(deviations)) if deviations else None,
            ))
        logger.info("m=%d done: %s", m, ", ".join(
            f"{row.rule.value}={row.mean_error:.6g}" for row in rows[-len(config.rules):]))

    fits = {}
    for rule in config.rules:
        points = [(row.m, row.mean_error) for row in rows
                  if row.rule is rule and row.errors >= MIN_ERRORS_FOR_FIT]
        if len(points) < MIN_FIT_POINTS:
            note = (f"slope undefined: {len(points)} grid points have at least "
                    f"{MIN_ERRORS_FOR_FIT} errors")
            logger.warning("%s: %s", rule.value, note)
            fits[rule] = RuleFit(rule, None, len(points), note)
        else:
            fits[rule] = RuleFit(rule, fit_exponent(points), len(points))
    return ExperimentResult(config, tuple(rows), fits)


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------

def _column_decisions(rule: Rule, columns: LabelMatrix, pool: WorkerPool,
                      estimate: Optional[WorkerPool]) -> np.ndarray:
    if rule is Rule.MV:
        return majority_vote(columns).y
    if rule is Rule.ORACLE:
        return oracle_mle(columns, pool).y
    return plugin_mle(columns, estimate).y


def _check_column_rule(rule: Union[Rule, str], estimate: Optional[WorkerPool]) -> Rule:
    rule = Rule.parse(rule)
    if rule not in COLUMN_RULES:
        raise ValidationError(
            f"Rule {rule.value!r} does not decide each item from its own column alone"
        )
    if rule is Rule.PLUGIN and estimate is None:
        raise ValidationError("The plugin rule needs an estimated pool")
    return rule


def exact_error(pool: WorkerPool, rule: Union[Rule, str], true_label: int,
                estimate: Optional[WorkerPool] = None) -> float:
    """
    Exact per-item error probability by enumerating all k**m label columns.

    Columns are visited in mixed-radix order (worker 0 most significant);
    each column's probability is accumulated in the log domain.

    Args:
        pool: Generating pool.
        rule: ``mv``, ``oracle`` or ``plugin``.
        true_label: True label of the item (1-based).
        estimate: Estimated pool for ``plugin``.

    Returns:
        float: P(decision != true_label).

    Raises:
        EnumerationTooLargeError: If k**m exceeds MAX_ENUMERATION.
        ValidationError: For rules that are not column-wise or a bad label.
    """
    rule = _check_column_rule(rule, estimate)
    if not 1 <= true_label <= pool.k:
        raise ValidationError(f"True label {true_label} outside 1..{pool.k}")
    m, k = pool.m, pool.k
    total = k ** m
    if total > MAX_ENUMERATION:
        raise EnumerationTooLargeError(
            f"k**m = {k}**{m} columns exceeds the enumeration limit {MAX_ENUMERATION}"
        )
    with np.errstate(divide="ignore"):
        log_rows = np.log(pool.tensor[:, true_label - 1, :])
    place = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
    workers = np.arange(m)[:, None]
    error = 0.0
    for start in range(0, total, ENUMERATION_CHUNK):
        index = np.arange(start, min(total, start + ENUMERATION_CHUNK), dtype=np.int64)
        digits = (index[None, :] // place[:, None]) % k
        log_prob = log_rows[workers, digits].sum(axis=0)
        decisions = _column_decisions(rule, LabelMatrix(digits + 1, k), pool, estimate)
        error += float(np.exp(log_prob[decisions != true_label]).sum())
    return min(1.0, error)


def exact_average_error(pool: WorkerPool, rule: Union[Rule, str],
                        estimate: Optional[WorkerPool] = None) -> float:
    """Exact per-item error averaged over a uniformly drawn true label."""
    return float(np.mean([exact_error(pool, rule, label, estimate)
                          for label in range(1, pool.k + 1)]))


def estimate_error(pool: WorkerPool, rule: Union[Rule, str], true_label: int,
                   columns: int, seed: int = 0,
                   estimate: Optional[WorkerPool] = None) -> Tuple[float, float]:
    """
    Monte Carlo counterpart of exact_error.

    Returns:
        Tuple[float, float]: (mean error, binomial standard error) over
        ``columns`` simulated items that all carry ``true_label``.
    """
    rule = _check_column_rule(rule, estimate)
    truth = GroundTruth(np.full(columns, true_label))
    labels = generate_labels(pool, truth, seed)
    decisions = _column_decisions(rule, labels, pool, estimate)
    errors = int(np.count_nonzero(decisions != true_label))
    return errors / columns, _binomial_std_error(errors, columns)


# ---------------------------------------------------------------------------
# Sample-size rule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSizeReport:
    i_pi: float
    epsilon: float
    required_m: int
    simulated_m: int
    n: int
    trials: int
    successes: int
    success_fraction: float
    criterion: str

    def to_dict(self) -> dict:
        return {
            "i_pi": self.i_pi,
            "epsilon": self.epsilon,
            "required_m": self.required_m,
            "simulated_m": self.simulated_m,
            "n": self.n,
            "trials": self.trials,
            "successes": self.successes,
            "success_fraction": self.success_fraction,
            "criterion": self.criterion,
        }


def verify_sample_size(pool_spec: PoolSpec, epsilon: float, trials: int, seed: int = 0,
                       n: int = 1000, rule: Union[Rule, str] = Rule.ORACLE,
                       safety_factor: float = SAFETY_FACTOR,
                       class_prior: Optional[Sequence[float]] = None,
                       threads: int = 1) -> SampleSizeReport:
    """
    Check the worker requirement m* = ceil(log(1/epsilon) / I) by simulation.

    Simulates ``trials`` data sets with ceil(safety_factor * m*) workers and
    counts the trials whose error rate is at most ``epsilon``. When
    ``epsilon <= 1/n`` a trial only counts if every item is recovered.

    Returns:
        SampleSizeReport: Requirement, simulated crowd size and success rate.
    """
    if trials < 1 or n < 1:
        raise ValidationError(f"Need trials >= 1 and n >= 1, got trials={trials}, n={n}")
    rule = Rule.parse(rule)
    i_pi = minimax_exponent(pool_spec.reference_pool()).i_pi
    required = required_workers(i_pi, epsilon)
    perfect = epsilon * n <= 1.0 + 1e-9
    criterion = "perfect_recovery" if perfect else "error_at_most_epsilon"
    if required == 0:
        return SampleSizeReport(i_pi, epsilon, 0, 0, n, 0, 0, 1.0, "vacuous")

    simulated = max(1, math.ceil(safety_factor * required - 1e-9))
    pool = pool_spec.take(simulated)

    def run_trial(trial: int) -> bool:
        truth = sample_truth(pool.k, n, derive_seed(seed, trial, 0), class_prior)
        labels = generate_labels(pool, truth, derive_seed(seed, trial, 1))
        outcome = aggregate_labels(rule, labels, pool=pool)
        rate = misclassification_rate(outcome.labels, truth)
        return rate == 0.0 if perfect else rate <= epsilon

    successes = sum(_parallel_map(run_trial, list(range(trials)), threads))
    logger.info("m*=%d, simulated m=%d: %d/%d trials met the target",
                required, simulated, successes, trials)
    return SampleSizeReport(i_pi, epsilon, required, simulated, n, trials, successes,
                            successes / trials, criterion)
