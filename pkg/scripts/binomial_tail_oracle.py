"""
Standalone oracle for the behaviorized rank-2 example: Alice's gain from the
window swap, computed from binomial tail masses alone.

Under the first component the number of ones in Alice's strategy is
Binomial(n, 2/3) and Bob plays 0; under the second it is Binomial(n, 1/3)
and Bob plays 1. Counts within sqrt(n) ln(n) of n/3 switch to action 3
(pays 1 against Bob's 1, -2 against 0); counts near 2n/3 switch to action 2
(pays 1 against 0, -2 against 1). Overlapping windows are split at n/2.

Usage: python scripts/binomial_tail_oracle.py [n ...]
"""

import math
import sys

from scipy.stats import binom


def open_interval_mass(lo: float, hi: float, n: int, p: float) -> float:
    """P(lo < S < hi) for S ~ Binomial(n, p)."""
    first = max(math.floor(lo) + 1, 0)
    last = min(math.ceil(hi) - 1, n)
    if last < first:
        return 0.0
    return float(binom.cdf(last, n, p) - binom.cdf(first - 1, n, p))


def windows(n: int):
    r = math.sqrt(n) * math.log(n)
    low = (n / 3 - r, n / 3 + r)
    high = (2 * n / 3 - r, 2 * n / 3 + r)
    if low[1] > high[0]:
        low, high = (low[0], n / 2), (n / 2, high[1])
    return low, high


def window_swap_gain(n: int) -> float:
    low, high = windows(n)
    bob0_low = open_interval_mass(*low, n, 2 / 3)
    bob0_high = open_interval_mass(*high, n, 2 / 3)
    bob1_low = open_interval_mass(*low, n, 1 / 3)
    bob1_high = open_interval_mass(*high, n, 1 / 3)
    return 0.5 * (bob0_high - 2 * bob0_low) + 0.5 * (bob1_low - 2 * bob1_high)


if __name__ == "__main__":
    sizes = [int(a) for a in sys.argv[1:]] or [4, 10, 30, 100, 300, 1000]
    for n in sizes:
        print(f"n={n:5d}  window swap gain={window_swap_gain(n):.6f}")
