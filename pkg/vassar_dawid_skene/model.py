"""Domain types for the Dawid-Skene model and the label-generation simulator.

Labels are 1-based integers in ``{1..k}``; ``0`` is reserved for a missing
label. Every type is immutable after construction (the backing numpy arrays
are flagged read-only) and can be shared freely between threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12  # Allowed deviation of a confusion row sum from 1
MISSING = 0          # Marker for a missing label in a LabelMatrix

ArrayLike = Union[np.ndarray, Sequence]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _check_seed(seed: int) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"Seed must be an integer, got {seed!r}")
    if seed < 0:
        raise ValidationError(f"Seed must be non-negative, got {seed}")
    return int(seed)


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derive an independent child seed from a root seed and integer keys.

    The derivation goes through ``numpy.random.SeedSequence`` spawn keys, so
    the same ``(seed, keys)`` always yields the same child and distinct keys
    yield statistically independent streams.

    Args:
        seed: Root seed (non-negative integer).
        *keys: Non-negative integers identifying the child stream.

    Returns:
        int: A 64-bit child seed.
    """
    seq = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(int(key) for key in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """
    One worker's k x k row-stochastic ability matrix.

    ``rows[g][h]`` is the probability that the worker reports label ``h + 1``
    when the true label is ``g + 1``. Rows are validated to sum to one within
    ``ROW_SUM_TOL`` and are then renormalised exactly.
    """

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ValidationError(f"Confusion matrix must be square, got shape {rows.shape}")
        if rows.shape[0] < 2:
            raise ValidationError(f"Confusion matrix needs k >= 2 labels, got k={rows.shape[0]}")
        if not np.all(np.isfinite(rows)) or rows.min() < 0.0 or rows.max() > 1.0:
            raise ValidationError("Confusion matrix entries must lie in [0, 1]")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValidationError(
                f"Confusion matrix row {bad[0] + 1} sums to {sums[bad[0]]!r}, expected 1"
            )
        rows = np.minimum(rows / sums[:, None], 1.0)
        object.__setattr__(self, "rows", _frozen(rows))

    @property
    def k(self) -> int:
        return int(self.rows.shape[0])

    def to_list(self) -> list:
        return self.rows.tolist()


@dataclass(frozen=True, eq=False)
class WorkerPool:
    """
    Ordered collection of m confusion matrices sharing the same k.

    Attributes:
        workers (Tuple[ConfusionMatrix, ...]): The workers, in stream order.
        tensor (np.ndarray): Read-only ``(m, k, k)`` stack of the matrices.
    """

    workers: Tuple[ConfusionMatrix, ...]
    tensor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        workers = tuple(
            w if isinstance(w, ConfusionMatrix) else ConfusionMatrix(w) for w in self.workers
        )
        if not workers:
            raise ValidationError("A worker pool needs at least one worker")
        ks = {w.k for w in workers}
        if len(ks) != 1:
            raise ValidationError(f"All workers must share the same k, got {sorted(ks)}")
        object.__setattr__(self, "workers", workers)
        object.__setattr__(self, "tensor", _frozen(np.stack([w.rows for w in workers])))

    @classmethod
    def from_array(cls, matrices: ArrayLike) -> "WorkerPool":
        """Build a pool from an ``(m, k, k)`` nested sequence or array."""
        array = np.asarray(matrices, dtype=float)
        if array.ndim != 3:
            raise ValidationError(f"Expected an (m, k, k) array, got shape {array.shape}")
        return cls(tuple(ConfusionMatrix(a) for a in array))

    @property
    def m(self) -> int:
        return len(self.workers)

    @property
    def k(self) -> int:
        return self.workers[0].k

    @property
    def min_entry(self) -> float:
        return float(self.tensor.min())

    @property
    def is_strictly_positive(self) -> bool:
        return bool(self.tensor.min() > 0.0)

    def prefix(self, m: int) -> "WorkerPool":
        """Return the pool made of the first ``m`` workers."""
        if m < 1 or m > self.m:
            raise ValidationError(f"Prefix size {m} outside 1..{self.m}")
        return type(self)(self.workers[:m])

    def is_one_coin(self, tol: float = 1e-12) -> bool:
        """True when k = 2 and every worker has the symmetric one-coin form."""
        if self.k != 2:
            return False
        t = self.tensor
        return bool(np.all(np.abs(t[:, 0, 0] - t[:, 1, 1]) <= tol))

    def to_one_coin(self) -> "OneCoinPool":
        if not self.is_one_coin():
            raise ValidationError("Pool is not of the one-coin form")
        return OneCoinPool(self.tensor[:, 0, 0].copy())

    def to_list(self) -> list:
        return self.tensor.tolist()


@dataclass(frozen=True, eq=False)
class OneCoinPool:
    """Binary pool where worker i is correct with probability ``p[i]``."""

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.atleast_1d(np.array(self.p, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("One-coin accuracies must be a non-empty vector")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValidationError("One-coin accuracies must lie in [0, 1]")
        object.__setattr__(self, "p", _frozen(p))

    @property
    def m(self) -> int:
        return int(self.p.size)

    def to_worker_pool(self) -> WorkerPool:
        matrices = np.empty((self.m, 2, 2))
        matrices[:, 0, 0] = matrices[:, 1, 1] = self.p
        matrices[:, 0, 1] = matrices[:, 1, 0] = 1.0 - self.p
        return WorkerPool.from_array(matrices)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Vector of n true (or estimated) labels, each a positive integer."""

    y: np.ndarray

    def __post_init__(self) -> None:
        raw = np.atleast_1d(np.asarray(self.y))
        if raw.ndim != 1 or raw.size < 1:
            raise ValidationError("Ground truth must be a non-empty label vector")
        y = raw.astype(np.int64)
        if not np.array_equal(y, raw):
            raise ValidationError("Ground truth labels must be integers")
        if y.min() < 1:
            raise ValidationError(f"Ground truth labels must be >= 1, got {y.min()}")
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return int(self.y.size)

    def check_k(self, k: int) -> None:
        if self.y.max() > k:
            raise ValidationError(f"Ground truth label {self.y.max()} outside 1..{k}")


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """
    Observed labels: ``entries[i][j]`` is worker i's label for item j.

    Entries lie in ``{0, 1, ..., k}`` with 0 meaning missing.
    """

    entries: np.ndarray
    k: int

    def __post_init__(self) -> None:
        raw = np.asarray(self.entries)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ValidationError(f"Label matrix must be a non-empty m x n grid, got {raw.shape}")
        entries = raw.astype(np.int64)
        if not np.array_equal(entries, raw):
            raise ValidationError("Label matrix entries must be integers")
        if self.k < 2:
            raise ValidationError(f"Label matrix needs k >= 2, got {self.k}")
        if entries.min() < MISSING or entries.max() > self.k:
            raise ValidationError(f"Label matrix entries must lie in 0..{self.k}")
        object.__setattr__(self, "entries", _frozen(entries))
        object.__setattr__(self, "k", int(self.k))

    @property
    def m(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n(self) -> int:
        return int(self.entries.shape[1])

    @property
    def has_missing(self) -> bool:
        return bool(np.any(self.entries == MISSING))

    def prefix(self, m: int) -> "LabelMatrix":
        """Labels of the first ``m`` workers."""
        return LabelMatrix(self.entries[:m], self.k)

    def require_complete(self) -> None:
        if self.has_missing:
            raise ValidationError("Label matrix has missing entries; call remap_missing() first")


def _worker_uniforms(seed: int, worker: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(worker,)))
    return rng.random(n)


def generate_labels(pool: WorkerPool, truth: GroundTruth, seed: int = 0,
                    threads: int = 1) -> LabelMatrix:
    """
    Simulate every worker labelling every item.

    Each ``X_ij`` is drawn by inverse CDF from row ``y_j`` of worker i's
    confusion matrix. Worker i consumes its own stream derived from
    ``(seed, i)`` and uses its j-th uniform for item j, so the result does not
    depend on ``threads`` and the first ``m'`` rows for a prefix pool match.

    Args:
        pool: Generating confusion matrices.
        truth: True labels; must lie in ``1..pool.k``.
        seed: Root seed.
        threads: Number of worker rows drawn concurrently.

    Returns:
        LabelMatrix: ``pool.m`` x ``truth.n`` labels without missing entries.

    Raises:
        ValidationError: If a true label falls outside ``1..pool.k``.
    """
    seed = _check_seed(seed)
    truth.check_k(pool.k)
    cdf = np.cumsum(pool.tensor, axis=2)
    cdf[:, :, -1] = 1.0
    zero_based = truth.y - 1

    def draw(worker: int) -> np.ndarray:
        u = _worker_uniforms(seed, worker, truth.n)
        row = np.empty(truth.n, dtype=np.int64)
        for g in range(pool.k):
            mask = zero_based == g
            if mask.any():
                row[mask] = np.searchsorted(cdf[worker, g], u[mask], side="right")
        return row + 1

    if threads > 1 and pool.m > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            rows = list(executor.map(draw, range(pool.m)))
    else:
        rows = [draw(i) for i in range(pool.m)]
    return LabelMatrix(np.vstack(rows), pool.k)


def sample_truth(k: int, n: int, seed: int = 0,
                 class_prior: Optional[Iterable[float]] = None) -> GroundTruth:
    """Draw n true labels from ``class_prior`` (uniform over 1..k by default)."""
    if k < 2 or n < 1:
        raise ValidationError(f"Need k >= 2 and n >= 1, got k={k}, n={n}")
    prior = None
    if class_prior is not None:
        prior = np.asarray(list(class_prior), dtype=float)
        if prior.shape != (k,) or prior.min() < 0 or abs(prior.sum() - 1.0) > 1e-9:
            raise ValidationError(f"Class prior must be a probability vector of length {k}")
        prior = prior / prior.sum()
    rng = np.random.default_rng(np.random.SeedSequence(_check_seed(seed)))
    return GroundTruth(rng.choice(k, size=n, p=prior) + 1)


def misclassification_rate(estimate: GroundTruth, truth: GroundTruth) -> float:
    """
    Fraction of items whose estimated label differs from the truth.

    Raises:
        ValidationError: If the two label vectors differ in length.
    """
    if estimate.n != truth.n:
        raise ValidationError(f"Length mismatch: estimate has {estimate.n} items, truth {truth.n}")
    return int(np.count_nonzero(estimate.y != truth.y)) / truth.n


def remap_missing(labels: LabelMatrix) -> Tuple[LabelMatrix, int]:
    """Treat missing labels as an extra category ``k + 1``."""
    if not labels.has_missing:
        return labels, labels.k
    k_new = labels.k + 1
    entries = np.where(labels.entries == MISSING, k_new, labels.entries)
    logger.debug("Remapped %d missing labels to category %d",
                 int(np.count_nonzero(labels.entries == MISSING)), k_new)
    return LabelMatrix(entries, k_new), k_new
