"""Paired-sample statistics for benchmark comparisons.

Hand-rolled on purpose: the exact small-sample Wilcoxon distribution is
the quantity the benchmark reports hinge on, so it is computed here from
its definition (a dynamic program over achievable rank sums) and pinned
against a brute-force enumeration in the tests, instead of depending on a
stats library's switch between approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["WilcoxonResult", "wilcoxon_signed_rank", "midranks", "auc_score"]

# Below this many non-zero differences the two-sided p-value is exact;
# above, a normal approximation with tie and continuity corrections.
_EXACT_LIMIT = 20


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n_nonzero: int
    method: str  # "exact" | "normal" | "degenerate"


def midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean of the ranks they span."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    """Distribution of the positive-rank sum under random signs, by DP
    over 2*rank (mid-ranks are multiples of 1/2, so doubling gives ints)."""
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    top = 0
    for r in doubled:
        nxt = counts.copy()
        nxt[r : top + r + 1] += counts[0 : top + 1]
        counts = nxt
        top += r
    w2 = int(np.rint(2.0 * w_plus))
    denom = counts.sum()
    p_le = counts[: w2 + 1].sum() / denom
    p_ge = counts[w2:].sum() / denom
    return min(1.0, 2.0 * min(p_le, p_ge))


def _normal_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # Tie correction: each group of t tied ranks lowers the variance.
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return 1.0
    diff = w_plus - mean
    # Continuity correction toward the mean.
    diff -= 0.5 * np.sign(diff)
    z = diff / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(abs(z) / math.sqrt(2.0))
    return min(1.0, p)


def wilcoxon_signed_rank(a: np.ndarray, b: np.ndarray) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; tied absolute differences get mid-ranks.
    The statistic is the positive-rank sum W+.  Exact p-value up to 20
    informative pairs, tie- and continuity-corrected normal approximation
    beyond.  With no informative pairs the test is degenerate and p = 1.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired samples must be 1-D arrays of equal length")
    d = x - y
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, n_nonzero=0, method="degenerate")
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= _EXACT_LIMIT:
        p = _exact_two_sided(ranks, w_plus)
        method = "exact"
    else:
        p = _normal_two_sided(ranks, w_plus)
        method = "normal"
    return WilcoxonResult(statistic=w_plus, p_value=p, n_nonzero=n, method=method)


def auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum identity: the fraction of
    (positive, negative) pairs where the positive scores higher, ties
    counting one half."""
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("labels and scores must be 1-D arrays of equal length")
    pos = int(np.sum(y == 1))
    neg = int(np.sum(y == 0))
    if pos + neg != y.size:
        raise ValueError("labels must be 0 or 1")
    if pos == 0 or neg == 0:
        return float("nan")
    ranks = midranks(s)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)
