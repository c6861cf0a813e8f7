"""Nonparametric comparisons across datasets: Wilcoxon, Cliff's delta, CIs and ranks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import pandas as pd
from scipy import stats as sps

logger = logging.getLogger(__name__)

EXACT_MAX_N = 25
ALPHA = 0.05

# |delta| lower bounds of the small / medium / large labels
CLIFF_THRESHOLDS = (0.1, 0.33, 0.47)

ZeroMethod = Literal["wilcox", "pratt"]


class StatsError(ValueError):
    """Inputs a statistic is undefined for."""


@dataclass
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    w_minus: float
    p_value: float
    n: int  # non-zero differences
    method: Literal["exact", "normal", "degenerate"]

    @property
    def degenerate(self) -> bool:
        return self.method == "degenerate"


def _paired(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise StatsError(f"paired samples need equal non-empty 1-D shapes, got {x.shape} and {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise StatsError("paired samples contain non-finite values")
    return x - y


def _exact_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    """P(|W+ - mu| >= |observed - mu|) under random signs, by counting subsets.

    Average ranks are multiples of 1/2, so sums are tracked on doubled ranks.
    """
    doubled = np.rint(ranks * 2).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted

    observed = int(round(2 * w_plus))
    sums = np.arange(total + 1)
    # compare 2*|S - total/2| to stay in integers
    extreme = np.abs(2 * sums - total) >= abs(2 * observed - total)
    return float(counts[extreme].sum() / counts.sum())


def wilcoxon_signed_rank(
    x: Sequence[float],
    y: Sequence[float],
    zero_method: ZeroMethod = "wilcox",
    exact_max_n: int = EXACT_MAX_N,
) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test of ``x - y``.

    Zero differences are dropped before ranking ("wilcox") or ranked and then
    dropped ("pratt"). Tied magnitudes get average ranks. The p-value is exact
    by enumeration for up to ``exact_max_n`` non-zero differences; beyond that
    a normal approximation with tie and continuity corrections is used.

    Returns:
        WilcoxonResult; all-zero differences give p = 1 with method "degenerate".
    """
    diff = _paired(x, y)
    if zero_method == "pratt":
        all_ranks = sps.rankdata(np.abs(diff))
        keep = diff != 0
        ranks, signs = all_ranks[keep], np.sign(diff[keep])
    elif zero_method == "wilcox":
        nonzero = diff[diff != 0]
        ranks, signs = sps.rankdata(np.abs(nonzero)), np.sign(nonzero)
    else:
        raise StatsError(f"unknown zero_method {zero_method!r}")

    n = int(ranks.size)
    if n == 0:
        return WilcoxonResult(0.0, 0.0, 0.0, 1.0, 0, "degenerate")

    w_plus = float(ranks[signs > 0].sum())
    w_minus = float(ranks[signs < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= exact_max_n:
        p = _exact_two_sided(ranks, w_plus)
        return WilcoxonResult(statistic, w_plus, w_minus, min(p, 1.0), n, "exact")

    # sum of squared ranks already carries the tie correction
    mu = ranks.sum() / 2.0
    sigma = np.sqrt((ranks**2).sum() / 4.0)
    z = max(abs(w_plus - mu) - 0.5, 0.0) / sigma
    p = float(min(2.0 * sps.norm.sf(z), 1.0))
    return WilcoxonResult(statistic, w_plus, w_minus, p, n, "normal")


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> tuple[float, str]:
    """Dominance effect size of ``a`` over ``b`` and its magnitude label."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise StatsError("cliffs_delta needs two non-empty samples")
    signs = np.sign(a[:, None] - b[None, :])
    delta = float(signs.sum() / (a.size * b.size))
    return delta, cliff_magnitude(delta)


def cliff_magnitude(delta: float) -> str:
    size = abs(delta)
    small, medium, large = CLIFF_THRESHOLDS
    if size < small:
        return "negligible"
    if size < medium:
        return "small"
    if size < large:
        return "medium"
    return "large"


def mean_ci95(values: Sequence[float]) -> tuple[float, float]:
    """Mean and Student-t 95% half-width with the sample standard deviation."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2:
        raise StatsError(f"mean_ci95 needs at least 2 values, got {n}")
    half = sps.t.ppf(0.975, n - 1) * values.std(ddof=1) / np.sqrt(n)
    return float(values.mean()), float(half)


@dataclass
class RankTable:
    """Average rank (1 = best) and first-place wins per method."""

    table: pd.DataFrame
    excluded: list[str] = field(default_factory=list)


def avg_rank_table(acc: pd.DataFrame) -> RankTable:
    """Rank methods (columns) within each dataset (row) by accuracy.

    Ties share the average rank and every tied leader earns a win. Datasets
    with a missing cell are excluded and listed in ``excluded``.
    """
    if acc.shape[1] < 1:
        raise StatsError("no methods to rank")
    complete = acc.notna().all(axis=1)
    excluded = [str(name) for name in acc.index[~complete]]
    if excluded:
        logger.warning("Excluding %d dataset(s) with missing cells: %s", len(excluded), ", ".join(excluded))
    data = acc.loc[complete].astype(float)
    if data.empty:
        raise StatsError("every dataset has a missing cell")

    ranks = data.rank(axis=1, ascending=False, method="average")
    leaders = data.eq(data.max(axis=1), axis=0)
    table = pd.DataFrame({"avg_rank": ranks.mean(axis=0), "wins": leaders.sum(axis=0).astype(int)})
    table.index.name = "method"
    return RankTable(table=table.sort_values(["avg_rank", "wins"], ascending=[True, False]), excluded=excluded)


@dataclass
class PairedComparison:
    label: str
    p_value: float
    significant: bool
    delta: float
    magnitude: str
    method: str


def compare_paired(
    a: Sequence[float],
    b: Sequence[float],
    label: str = "",
    alpha: float = ALPHA,
    zero_method: ZeroMethod = "wilcox",
) -> PairedComparison:
    """Wilcoxon p-value and Cliff's delta of ``a`` against ``b``."""
    test = wilcoxon_signed_rank(a, b, zero_method=zero_method)
    delta, magnitude = cliffs_delta(a, b)
    return PairedComparison(
        label=label,
        p_value=test.p_value,
        significant=test.p_value < alpha,
        delta=delta,
        magnitude=magnitude,
        method=test.method,
    )
