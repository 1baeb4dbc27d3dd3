"""Test suite for vassar_dawid_skene."""
