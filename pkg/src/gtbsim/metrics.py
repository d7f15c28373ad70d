"""Social measurements: Gini, equality, productivity, maximin, social
welfare functions, and Pearson correlation for alignment-vs-metric reports.

All functions are pure and operate on plain sequences or numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np


def gini(coins) -> float:
    """Mean absolute pairwise difference, normalized: sum |C_i - C_j| / (2N sum C).

    All-zero endowments are defined as perfect equality (0).
    """
    c = np.asarray(coins, dtype=np.float64)
    if c.size < 2:
        raise ValueError("gini needs at least 2 agents")
    if (c < 0).any():
        raise ValueError("endowments must be nonnegative")
    total = c.sum()
    if total == 0:
        return 0.0
    diff = np.abs(c[:, None] - c[None, :]).sum()
    return float(diff / (2 * c.size * total))


def equality(coins) -> float:
    """1 - N/(N-1) * gini, in [0, 1]."""
    n = len(coins)
    return 1.0 - n / (n - 1) * gini(coins)


def productivity(coins) -> float:
    """Sum of all coin endowments."""
    return float(np.asarray(coins, dtype=np.float64).sum())


def maximin(coins) -> float:
    """Coin endowment of the worst-off agent."""
    if len(coins) < 1:
        raise ValueError("maximin needs at least 1 agent")
    return float(min(coins))


def maximin_utility(utilities) -> float:
    """Alternative maximin over utilities instead of coins."""
    return float(min(utilities))


def swf_inverse_income(utilities, coins, coin_floor: float = 1e-6) -> float:
    """Inverse-income weighted sum of utilities; weights normalized to 1."""
    u = np.asarray(utilities, dtype=np.float64)
    c = np.maximum(np.asarray(coins, dtype=np.float64), coin_floor)
    w = 1.0 / c
    w /= w.sum()
    return float((w * u).sum())


def swf_eq_prod(coins) -> float:
    """Product of equality and productivity."""
    return equality(coins) * productivity(coins)


def correlate(x, y):
    """Pearson correlation coefficient; None when either series has zero
    variance (undefined)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("correlate needs equal-length series of length >= 3")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt(float((xd * xd).sum()))
    sy = math.sqrt(float((yd * yd).sum()))
    if sx == 0.0 or sy == 0.0:
        return None
    return float((xd * yd).sum() / (sx * sy))


def snapshot(coins, utilities, coin_floor: float = 1e-6) -> dict:
    """All per-step metrics in one record."""
    return {
        "eq": equality(coins),
        "gini": gini(coins),
        "prod": productivity(coins),
        "maximin": maximin(coins),
        "swf_inverse_income": swf_inverse_income(utilities, coins, coin_floor),
        "swf_eq_times_prod": swf_eq_prod(coins),
    }
