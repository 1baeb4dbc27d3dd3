"""Tests for vassar_dawid_skene.io module."""

import json

import numpy as np
import pytest

from vassar_dawid_skene.exceptions import InputFileError
from vassar_dawid_skene.io import (
    csv_text,
    format_number,
    json_text,
    label_matrix_text,
    pool_text,
    read_label_matrix,
    read_pool,
    read_truth,
    truth_text,
)
from vassar_dawid_skene.model import GroundTruth, LabelMatrix


class TestFormatNumber:
    """Tests for format_number."""

    def test_shortest_round_trip(self):
        """Test floats keep every significant digit and nothing more."""
        assert format_number(0.1) == "0.1"
        assert float(format_number(1 / 3)) == 1 / 3
        assert format_number(np.float64(2.5e-7)) == "2.5e-07"

    def test_integers_and_none(self):
        """Test integers print plainly and None is an empty cell."""
        assert format_number(np.int64(7)) == "7"
        assert format_number(None) == ""


class TestReaders:
    """Tests for the file readers."""

    def test_label_matrix(self, tmp_path):
        """Test a label CSV with a missing entry."""
        path = tmp_path / "labels.csv"
        path.write_text("1,2,0\n2,2,1\n")
        labels = read_label_matrix(path)
        assert labels.entries.tolist() == [[1, 2, 0], [2, 2, 1]]
        assert labels.k == 2

    def test_label_matrix_single_row(self, tmp_path):
        """Test a single worker row stays two-dimensional."""
        path = tmp_path / "labels.csv"
        path.write_text("3,1\n")
        labels = read_label_matrix(path, k=4)
        assert labels.m == 1 and labels.k == 4

    def test_label_matrix_out_of_range(self, tmp_path):
        """Test entries above k name the file."""
        path = tmp_path / "labels.csv"
        path.write_text("1,5\n")
        with pytest.raises(InputFileError, match="labels.csv"):
            read_label_matrix(path, k=2)

    def test_non_integer(self, tmp_path):
        """Test fractional labels are rejected."""
        path = tmp_path / "labels.csv"
        path.write_text("1,1.5\n")
        with pytest.raises(InputFileError, match="integer"):
            read_label_matrix(path)

    def test_missing_file(self, tmp_path):
        """Test unreadable files raise InputFileError."""
        with pytest.raises(InputFileError, match="nope.csv"):
            read_truth(tmp_path / "nope.csv")

    def test_truth_single_row(self, tmp_path):
        """Test ground truth must be one row."""
        path = tmp_path / "truth.csv"
        path.write_text("1,2\n2,1\n")
        with pytest.raises(InputFileError, match="single row"):
            read_truth(path)

    def test_pool(self, ternary_pool, write_json):
        """Test a pool JSON file."""
        pool = read_pool(write_json("pool.json", ternary_pool.to_list()))
        assert np.allclose(pool.tensor, ternary_pool.tensor)

    def test_invalid_pool(self, write_json):
        """Test rows not summing to one are reported with the file."""
        path = write_json("pool.json", [[[0.5, 0.6], [0.5, 0.5]]])
        with pytest.raises(InputFileError, match="invalid worker pool"):
            read_pool(path)

    def test_malformed_json(self, tmp_path):
        """Test malformed JSON is reported."""
        path = tmp_path / "pool.json"
        path.write_text("[[[0.5, ")
        with pytest.raises(InputFileError, match="pool.json"):
            read_pool(path)


class TestWriters:
    """Tests for the text writers."""

    def test_label_matrix_text(self):
        """Test the label CSV has no header and a trailing newline."""
        text = label_matrix_text(LabelMatrix([[1, 2], [2, 1]], 2))
        assert text == "1,2\n2,1\n"

    def test_truth_text(self):
        """Test ground truth is a single row."""
        assert truth_text(GroundTruth([2, 1, 1])) == "2,1,1\n"

    def test_csv_header(self):
        """Test a header row and empty cells for None."""
        text = csv_text([("mv", 3, 0.25, None)], header=("rule", "m", "e", "slope"))
        assert text == "rule,m,e,slope\nmv,3,0.25,\n"

    def test_json_newline(self, ternary_pool):
        """Test JSON output ends with a newline and round-trips the pool."""
        text = pool_text(ternary_pool)
        assert text.endswith("\n")
        assert json.loads(text) == ternary_pool.to_list()
        assert json_text({"a": 1}) == '{\n  "a": 1\n}\n'

    def test_round_trip(self, tmp_path):
        """Test a written label matrix reads back unchanged."""
        labels = LabelMatrix([[1, 3, 0], [2, 2, 3]], 3)
        path = tmp_path / "labels.csv"
        path.write_text(label_matrix_text(labels))
        assert np.array_equal(read_label_matrix(path, k=3).entries, labels.entries)
