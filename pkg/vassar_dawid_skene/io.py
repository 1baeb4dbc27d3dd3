"""Readers and writers for the package's file formats.

- LabelMatrix CSV: m rows of n comma-separated integers, no header, 0 = missing.
- GroundTruth CSV: a single row of n integers.
- WorkerPool JSON: array of m k x k row-major probability arrays.

Floats are written in shortest round-trip form (``repr``) and every text
output ends with a newline.
"""

import csv
import io as _io
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

from .exceptions import CrowdsourcingError, InputFileError
from .model import GroundTruth, LabelMatrix, WorkerPool

PathLike = Union[str, Path]


def format_number(value: Any) -> str:
    """Shortest round-trip text for a CSV cell; None becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _load_integers(path: PathLike) -> np.ndarray:
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise InputFileError(path, str(e))
    if raw.size == 0:
        raise InputFileError(path, "file contains no labels")
    values = raw.astype(np.int64)
    if not np.array_equal(values, raw):
        raise InputFileError(path, "expected integer labels")
    return values


def read_label_matrix(path: PathLike, k: Optional[int] = None) -> LabelMatrix:
    """
    Read an m x n label CSV.

    Args:
        path: CSV file.
        k: Number of labels; inferred as the largest entry (at least 2) if None.

    Raises:
        InputFileError: If the file cannot be read or violates the format.
    """
    entries = _load_integers(path)
    if k is None:
        k = max(2, int(entries.max()))
    try:
        return LabelMatrix(entries, k)
    except CrowdsourcingError as e:
        raise InputFileError(path, str(e))


def read_truth(path: PathLike) -> GroundTruth:
    """Read a single-row ground-truth CSV."""
    values = _load_integers(path)
    if values.shape[0] != 1:
        raise InputFileError(path, f"expected a single row of labels, found {values.shape[0]} rows")
    try:
        return GroundTruth(values[0])
    except CrowdsourcingError as e:
        raise InputFileError(path, str(e))


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        raise InputFileError(path, str(e))


def read_pool(path: PathLike) -> WorkerPool:
    """Read a WorkerPool JSON file."""
    data = read_json(path)
    try:
        return WorkerPool.from_array(data)
    except (CrowdsourcingError, ValueError, TypeError) as e:
        raise InputFileError(path, f"invalid worker pool: {e}")


def csv_text(rows: Iterable[Sequence[Any]], header: Optional[Sequence[str]] = None) -> str:
    buffer = _io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(value) for value in row])
    return buffer.getvalue()


def label_matrix_text(labels: LabelMatrix) -> str:
    return csv_text(labels.entries.tolist())


def truth_text(truth: GroundTruth) -> str:
    return csv_text([truth.y.tolist()])


def json_text(data: Any) -> str:
    return json.dumps(data, indent=2) + "\n"


def pool_text(pool: WorkerPool) -> str:
    return json_text(pool.to_list())


def write_text(path: PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
