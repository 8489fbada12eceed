"""Distribution and ranking metrics over final reputations."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import stats


def reputation_mass(values: Sequence[float]) -> np.ndarray:
    """Non-negative part of each reputation; negative standing carries no mass."""
    return np.clip(np.asarray(values, dtype=float), 0.0, None)


def gini(values: Sequence[float]) -> float:
    """Gini coefficient of the reputation mass, 0 for an empty or all-zero population."""
    x = np.sort(reputation_mass(values))
    n = x.size
    total = x.sum()
    if n == 0 or total == 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(np.sum((2 * ranks - n - 1) * x) / (n * total))


def entropy(values: Sequence[float]) -> float:
    """Shannon entropy, in bits, of the normalized reputation mass."""
    x = reputation_mass(values)
    total = x.sum()
    if total == 0:
        return 0.0
    p = x / total
    p = p[p > 0]  # tiny masses can underflow to zero
    return float(-np.sum(p * np.log2(p)))


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties; NaN if either side is constant."""
    if len(a) != len(b):
        raise ValueError("spearman needs equal-length sequences")
    if len(a) < 2:
        return math.nan
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.all(a == a[0]) or np.all(b == b[0]):
        return math.nan
    return float(stats.spearmanr(a, b).statistic)
