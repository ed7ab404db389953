"""Paired statistics: exact Wilcoxon distribution against brute-force sign
enumeration, the large-sample normal branch against scipy, and rank AUC
against pair counting."""

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcnn.stats import WilcoxonResult, auc_score, midranks, wilcoxon_signed_rank

import oracles


class TestMidranks:
    def test_distinct_values(self):
        np.testing.assert_array_equal(midranks(np.array([3.0, 1.0, 2.0])), [3, 1, 2])

    def test_ties_share_mean_rank(self):
        np.testing.assert_array_equal(
            midranks(np.array([2.0, 1.0, 2.0, 2.0])), [3.0, 1.0, 3.0, 3.0]
        )

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
    def test_matches_oracle(self, values):
        v = np.array(values, dtype=float)
        np.testing.assert_array_equal(midranks(v), oracles.midranks(v))


class TestWilcoxonPinned:
    def test_five_uniform_improvements(self):
        # The smallest N where a one-directional result clears p < 0.1:
        # five positive differences put all mass on one tail, 2/2^5.
        a = np.array([1.2, 1.4, 1.1, 1.6, 1.3])
        b = np.array([1.0, 1.1, 1.0, 1.2, 1.0])
        r = wilcoxon_signed_rank(a, b)
        assert r.method == "exact"
        assert r.statistic == 15.0
        assert r.p_value == 0.0625
        assert r.n_nonzero == 5

    def test_perfectly_symmetric_differences(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = a[::-1].copy()
        r = wilcoxon_signed_rank(a, b)
        assert r.p_value == 1.0

    def test_all_zero_differences_degenerate(self):
        a = np.ones(4)
        r = wilcoxon_signed_rank(a, a.copy())
        assert r == WilcoxonResult(0.0, 1.0, 0, "degenerate")

    def test_zero_differences_dropped(self):
        a = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
        b = np.array([1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0])  # two zeros
        r = wilcoxon_signed_rank(a, b)
        assert r.n_nonzero == 5
        assert r.p_value == 0.0625

    def test_input_validation(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank(np.ones(3), np.ones(4))
        with pytest.raises(ValueError):
            wilcoxon_signed_rank(np.ones((2, 2)), np.ones((2, 2)))


class TestWilcoxonAgainstBruteForce:
    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=9
        )
    )
    def test_exact_branch_matches_enumeration(self, pairs):
        a = np.array([p[0] for p in pairs], dtype=float)
        b = np.array([p[1] for p in pairs], dtype=float)
        want = oracles.wilcoxon_exact_bruteforce(a, b)
        r = wilcoxon_signed_rank(a, b)
        if np.isnan(want):
            assert r.method == "degenerate" and r.p_value == 1.0
        else:
            assert r.method == "exact"
            assert abs(r.p_value - want) < 1e-12

    def test_exact_with_tied_magnitudes(self):
        a = np.array([2.0, 2.0, 1.0, 3.0, 0.5])
        b = np.zeros(5)
        want = oracles.wilcoxon_exact_bruteforce(a, b)
        assert abs(wilcoxon_signed_rank(a, b).p_value - want) < 1e-12


class TestWilcoxonNormalBranch:
    def test_switches_past_twenty_informative_pairs(self, rng):
        d = rng.standard_normal(21) + 0.3
        d[d == 0] = 0.1
        r = wilcoxon_signed_rank(d, np.zeros(21))
        assert r.method == "normal"

    @pytest.mark.parametrize("seed,offset", [(0, 0.5), (1, 0.0), (2, 1.2)])
    def test_matches_scipy_approximation(self, seed, offset):
        r = np.random.default_rng(seed)
        a = r.standard_normal(30) + offset
        b = r.standard_normal(30)
        mine = wilcoxon_signed_rank(a, b)
        ref = scipy.stats.wilcoxon(
            a, b, zero_method="wilcox", correction=True, mode="approx"
        )
        assert mine.method == "normal"
        assert abs(mine.p_value - ref.pvalue) < 1e-10

    def test_boundary_is_still_exact_at_twenty(self, rng):
        d = np.arange(1.0, 21.0)
        r = wilcoxon_signed_rank(d, np.zeros(20))
        assert r.method == "exact"
        # One-sided mass of the extreme table is 1/2^20.
        assert abs(r.p_value - 2.0 / 2**20) < 1e-15


class TestAucScore:
    def test_perfect_and_inverted(self):
        labels = np.array([0, 0, 1, 1])
        assert auc_score(labels, np.array([0.1, 0.2, 0.8, 0.9])) == 1.0
        assert auc_score(labels, np.array([0.9, 0.8, 0.2, 0.1])) == 0.0

    def test_ties_count_half(self):
        labels = np.array([0, 1])
        assert auc_score(labels, np.array([0.5, 0.5])) == 0.5

    @given(
        st.lists(st.tuples(st.integers(0, 1), st.integers(0, 4)), min_size=2, max_size=20)
    )
    def test_matches_pair_enumeration(self, rows):
        labels = np.array([r[0] for r in rows])
        scores = np.array([r[1] for r in rows], dtype=float) / 4.0
        want = oracles.auc_pairwise(scores, labels)
        got = auc_score(labels, scores)
        if np.isnan(want):
            assert np.isnan(got)
        else:
            assert abs(got - want) < 1e-12

    def test_single_class_is_nan(self):
        assert np.isnan(auc_score(np.zeros(3, dtype=int), np.array([0.1, 0.5, 0.9])))

    def test_validation(self):
        with pytest.raises(ValueError):
            auc_score(np.array([0, 2]), np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            auc_score(np.array([0, 1]), np.array([0.1, 0.2, 0.3]))
