"""Tests for the statistical comparison helpers."""

import itertools
import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats as sps

from src.stats import (
    StatsError,
    avg_rank_table,
    cliff_magnitude,
    cliffs_delta,
    compare_paired,
    mean_ci95,
    wilcoxon_signed_rank,
)


class TestWilcoxon:
    """Tests for the signed-rank test."""

    def test_resolution_128_beats_64(self, resolution_study):
        matrix, _ = resolution_study
        result = wilcoxon_signed_rank(matrix[128], matrix[64])
        assert (result.w_plus, result.w_minus) == (380.0, 116.0)
        assert result.statistic == 116.0
        assert result.method == "normal"
        assert result.p_value == pytest.approx(0.010, abs=0.002)
        assert result.p_value < 0.05

    def test_resolution_256_not_significant(self, resolution_study):
        matrix, _ = resolution_study
        result = wilcoxon_signed_rank(matrix[256], matrix[64])
        assert result.p_value == pytest.approx(0.061, abs=0.005)
        assert result.p_value > 0.05

    def test_normal_approximation_matches_scipy(self, resolution_study):
        matrix, _ = resolution_study
        ours = wilcoxon_signed_rank(matrix[128], matrix[64]).p_value
        reference = sps.wilcoxon(matrix[128], matrix[64], method="approx", correction=True).pvalue
        assert ours == pytest.approx(reference, rel=1e-6)

    def test_exact_matches_scipy_without_ties(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=12), rng.normal(size=12)
        ours = wilcoxon_signed_rank(x, y)
        reference = sps.wilcoxon(x, y, method="exact")
        assert ours.method == "exact"
        assert ours.p_value == pytest.approx(reference.pvalue, rel=1e-9)

    def test_small_exact_value(self):
        # differences +1, +2, +3, -4: W+ = 6; only the two sign patterns summing to 5 are less extreme
        result = wilcoxon_signed_rank([1.0, 2.0, 3.0, 0.0], [0.0, 0.0, 0.0, 4.0])
        assert result.w_plus == 6.0
        assert result.p_value == pytest.approx(14 / 16)

    def test_identical_samples(self):
        result = wilcoxon_signed_rank([0.5, 0.7, 0.9], [0.5, 0.7, 0.9])
        assert result.degenerate
        assert result.p_value == 1.0

    def test_zero_methods_differ(self):
        x = [0.0, 1.0, 2.0, 3.0, -1.5]
        y = [0.0, 0.0, 0.0, 0.0, 0.0]
        wilcox = wilcoxon_signed_rank(x, y, zero_method="wilcox")
        pratt = wilcoxon_signed_rank(x, y, zero_method="pratt")
        assert wilcox.n == pratt.n == 4
        assert pratt.w_plus == wilcox.w_plus + 3.0

    @pytest.mark.parametrize("x,y", [([1.0, 2.0], [1.0]), ([], []), ([1.0, np.nan], [0.0, 0.0])])
    def test_bad_input(self, x, y):
        with pytest.raises(StatsError):
            wilcoxon_signed_rank(x, y)


class TestCliffsDelta:
    """Tests for the dominance effect size."""

    def test_resolution_effects(self, resolution_study):
        matrix, _ = resolution_study
        delta, magnitude = cliffs_delta(matrix[128], matrix[64])
        assert delta == pytest.approx(0.0604, abs=0.02)
        assert magnitude == "negligible"
        assert abs(cliffs_delta(matrix[256], matrix[128])[0]) <= 0.03

    def test_complete_dominance(self):
        assert cliffs_delta([3.0, 4.0], [1.0, 2.0]) == (1.0, "large")
        assert cliffs_delta([1.0, 2.0], [3.0, 4.0]) == (-1.0, "large")

    def test_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.integers(0, 5, rng.integers(1, 7)).astype(float)
            b = rng.integers(0, 5, rng.integers(1, 7)).astype(float)
            wins = sum(x > y for x in a for y in b)
            losses = sum(x < y for x in a for y in b)
            assert cliffs_delta(a, b)[0] == pytest.approx((wins - losses) / (len(a) * len(b)))

    @pytest.mark.parametrize(
        "delta,label",
        [(0.0, "negligible"), (0.099, "negligible"), (0.1, "small"), (-0.33, "medium"), (0.47, "large")],
    )
    def test_magnitude(self, delta, label):
        assert cliff_magnitude(delta) == label

    def test_empty(self):
        with pytest.raises(StatsError):
            cliffs_delta([], [1.0])


class TestMeanCI:
    """Tests for Student-t confidence intervals."""

    def test_two_values(self):
        mean, half = mean_ci95([0.0, 1.0])
        assert mean == 0.5
        assert half == pytest.approx(6.353, abs=1e-3)

    def test_constant_values(self):
        mean, half = mean_ci95([0.8, 0.8, 0.8])
        assert mean == pytest.approx(0.8)
        assert half == pytest.approx(0.0, abs=1e-12)

    def test_single_value(self):
        with pytest.raises(StatsError):
            mean_ci95([0.5])


class TestAverageRanks:
    """Tests for the per-dataset rank table."""

    def test_full_tie(self):
        acc = pd.DataFrame({"a": [0.7], "b": [0.7]}, index=["d1"])
        table = avg_rank_table(acc).table
        assert table["avg_rank"].tolist() == [1.5, 1.5]
        assert table["wins"].tolist() == [1, 1]

    def test_rank_sums(self):
        rng = np.random.default_rng(1)
        acc = pd.DataFrame(rng.random((6, 4)).round(1), columns=list("abcd"))
        ranks = acc.rank(axis=1, ascending=False, method="average")
        assert np.allclose(ranks.sum(axis=1), 4 * 5 / 2)
        table = avg_rank_table(acc).table
        assert table["avg_rank"].sum() == pytest.approx(4 * 5 / 2)

    def test_sorted_best_first(self):
        acc = pd.DataFrame({"a": [0.9, 0.95], "b": [0.7, 0.9], "c": [0.1, 0.2]}, index=["d1", "d2"])
        table = avg_rank_table(acc).table
        assert table.index.tolist() == ["a", "b", "c"]
        assert table.loc["a", "avg_rank"] == 1.0
        assert table.loc["a", "wins"] == 2
        assert table.loc["c", "wins"] == 0

    def test_incomplete_rows_excluded(self):
        acc = pd.DataFrame({"a": [0.9, np.nan], "b": [0.8, 0.5]}, index=["d1", "d2"])
        ranked = avg_rank_table(acc)
        assert ranked.excluded == ["d2"]
        assert ranked.table.loc["a", "avg_rank"] == 1.0


def test_compare_paired_direction():
    better = [0.9, 0.8, 0.85, 0.95, 0.7, 0.75]
    worse = [0.6, 0.5, 0.55, 0.65, 0.4, 0.45]
    comparison = compare_paired(better, worse, label="x vs y")
    assert comparison.delta == 1.0
    assert comparison.magnitude == "large"
    assert comparison.significant
    assert comparison.p_value == pytest.approx(2 / 64)
    assert not math.isnan(comparison.p_value)


def enumerated_p(diffs):
    ranks = sps.rankdata(np.abs(diffs))
    observed = ranks[np.asarray(diffs) > 0].sum()
    centre = ranks.sum() / 2
    sums = np.array([ranks[np.array(signs, dtype=bool)].sum() for signs in itertools.product([0, 1], repeat=len(ranks))])
    return np.mean(np.abs(sums - centre) >= abs(observed - centre) - 1e-9)


@pytest.mark.parametrize("n", range(1, 11))
def test_exact_matches_sign_enumeration(n):
    rng = np.random.default_rng(n)
    diffs = rng.normal(size=n)
    result = wilcoxon_signed_rank(diffs, np.zeros(n))
    assert result.method == "exact"
    assert result.p_value == pytest.approx(enumerated_p(diffs), abs=1e-12)
