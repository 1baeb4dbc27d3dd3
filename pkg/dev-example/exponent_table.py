#!/usr/bin/env python
"""
Print I(p), J(p) and the worker requirement for homogeneous one-coin crowds.

Run from the project root:

    python dev-example/exponent_table.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from vassar_dawid_skene import (  # noqa: E402
    majority_vote_exponent,
    one_coin_exponent,
    required_workers,
)

EPSILON = 1e-3
ACCURACIES = (0.55, 0.6, 0.7, 0.8, 0.9, 0.95)


def main():
    print(f"{'p':>6} {'I(p)':>10} {'J(p)':>10} {'J/I':>6} {'m* (oracle)':>12} {'m* (mv)':>8}")
    for p in ACCURACIES:
        i_p = one_coin_exponent([p])
        _, j_p = majority_vote_exponent([p])
        print(f"{p:>6.2f} {i_p:>10.5f} {j_p:>10.5f} {j_p / i_p:>6.3f} "
              f"{required_workers(i_p, EPSILON):>12d} {required_workers(j_p, EPSILON):>8d}")

    # Mixed crowd: majority voting pays for ignoring who is good
    mixed = [0.6, 0.95] * 5
    i_p = one_coin_exponent(mixed)
    _, j_p = majority_vote_exponent(mixed)
    print(f"\nmixed {mixed[:2]} x5: I = {i_p:.5f}, J = {j_p:.5f}, J/I = {j_p / i_p:.3f}")


if __name__ == "__main__":
    main()
