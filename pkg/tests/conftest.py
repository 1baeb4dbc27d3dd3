"""Pytest configuration and shared fixtures for vassar_dawid_skene tests."""

import json
import sys
from pathlib import Path

import pytest

# Add parent directory to path so we can import the package
sys.path.insert(0, str(Path(__file__).parent.parent))

from vassar_dawid_skene.model import OneCoinPool, WorkerPool  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance sweep")


@pytest.fixture
def binary_pool():
    """Three binary one-coin workers with accuracies 0.8, 0.7 and 0.6."""
    return OneCoinPool([0.8, 0.7, 0.6]).to_worker_pool()


@pytest.fixture
def ternary_pool():
    """Two asymmetric workers over three labels."""
    return WorkerPool.from_array([
        [[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]],
        [[0.6, 0.3, 0.1], [0.2, 0.6, 0.2], [0.1, 0.1, 0.8]],
    ])


@pytest.fixture
def write_json(tmp_path):
    """Write an object as JSON under tmp_path and return the path."""
    def _write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path
    return _write
