"""Rank statistics for comparing optimized against random chain sets:
Mann-Whitney U (exact for small samples, tie-corrected normal approximation
otherwise) and Cliff's delta with the usual magnitude labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import EmptySample

EXACT_LIMIT = 8  # exact enumeration when both samples are this small or less


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """U for sample a: #{a_i > b_j} + 0.5 * #{a_i == b_j}."""
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def _exact_p(a: np.ndarray, b: np.ndarray, alternative: str) -> float:
    """Permutation null: enumerate every split of the pooled values."""
    pooled = np.concatenate([a, b])
    n = len(a)
    total = 0
    count_ge = 0
    count_le = 0
    u_obs = _u_statistic(a, b)
    idx = range(len(pooled))
    for comb in combinations(idx, n):
        mask = np.zeros(len(pooled), dtype=bool)
        mask[list(comb)] = True
        u = _u_statistic(pooled[mask], pooled[~mask])
        total += 1
        if u >= u_obs - 1e-12:
            count_ge += 1
        if u <= u_obs + 1e-12:
            count_le += 1
    if alternative == "greater":
        return count_ge / total
    if alternative == "less":
        return count_le / total
    return min(1.0, 2.0 * min(count_ge, count_le) / total)


def _normal_p(a: np.ndarray, b: np.ndarray, u: float, alternative: str) -> float:
    n, m = len(a), len(b)
    mean = n * m / 2.0
    pooled = np.concatenate([a, b])
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts**3 - counts).sum())
    nm = n + m
    var = n * m / 12.0 * (nm + 1 - tie_term / (nm * (nm - 1)))
    if var <= 0:
        return 1.0
    sd = math.sqrt(var)

    def sf(z):
        return 0.5 * math.erfc(z / math.sqrt(2.0))

    if alternative == "greater":
        return sf((u - mean - 0.5) / sd)
    if alternative == "less":
        return sf((mean - u - 0.5) / sd)
    z = (abs(u - mean) - 0.5) / sd
    return min(1.0, 2.0 * sf(z))


def mann_whitney_u(sample_a, sample_b, alternative: str = "two-sided") -> tuple[float, float]:
    """Rank-sum test. `alternative` = "greater" tests whether sample_a tends
    to exceed sample_b. Exact enumeration when both samples have <= 8 values,
    tie- and continuity-corrected normal approximation otherwise.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("both samples must be non-empty")
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    u = _u_statistic(a, b)
    if len(a) <= EXACT_LIMIT and len(b) <= EXACT_LIMIT:
        p = _exact_p(a, b, alternative)
    else:
        p = _normal_p(a, b, u, alternative)
    return u, p


_DELTA_THRESHOLDS = ((0.147, "negligible"), (0.33, "small"), (0.474, "medium"))


def cliffs_delta(sample_a, sample_b) -> tuple[float, str]:
    """delta = (#{a>b} - #{a<b}) / (|A| * |B|) with the standard magnitude labels."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("both samples must be non-empty")
    gt = (a[:, None] > b[None, :]).sum()
    lt = (a[:, None] < b[None, :]).sum()
    delta = float(gt - lt) / (len(a) * len(b))
    for thr, label in _DELTA_THRESHOLDS:
        if abs(delta) < thr:
            return delta, label
    return delta, "large"


@dataclass
class CriterionStats:
    mean_a: float
    std_a: float
    mean_b: float
    std_b: float
    u: float
    p_value: float
    delta: float
    magnitude: str


@dataclass
class ComparisonReport:
    coverage: CriterionStats
    similarity: CriterionStats
    kill_ratio: CriterionStats
    n_optimized: int
    n_random: int
    n_discarded: int  # infeasible random sets excluded from the comparison


# one-sided direction per criterion: optimized-better means greater coverage
# and kill ratio, smaller similarity
_DIRECTIONS = {"coverage": "greater", "similarity": "less", "kill_ratio": "greater"}


def compare(optimized_runs, random_runs) -> ComparisonReport:
    """Per-criterion one-sided Mann-Whitney + Cliff's delta of optimized vs
    random objective vectors. Infeasible random sets are excluded and counted.
    """
    if not optimized_runs or not random_runs:
        raise EmptySample("need at least one run per group")
    kept = [o for o in random_runs if o.feasible is not False]
    n_discarded = len(random_runs) - len(kept)
    if not kept:
        raise EmptySample("all random sets were infeasible")

    stats = {}
    for name, direction in _DIRECTIONS.items():
        a = np.array([getattr(o, name) for o in optimized_runs])
        b = np.array([getattr(o, name) for o in kept])
        u, p = mann_whitney_u(a, b, alternative=direction)
        delta, magnitude = cliffs_delta(a, b)
        stats[name] = CriterionStats(
            float(a.mean()), float(a.std()), float(b.mean()), float(b.std()), u, p, delta, magnitude
        )
    return ComparisonReport(
        stats["coverage"],
        stats["similarity"],
        stats["kill_ratio"],
        len(optimized_runs),
        len(kept),
        n_discarded,
    )
