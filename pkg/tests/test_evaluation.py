import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dyngcn.evaluation import (EXACT_ENUMERATION_MAX_N, accuracy, confusion_matrix,
                               monte_carlo_splits, stratified_counts, unweighted_f1,
                               wilcoxon_signed_rank)


def one_hot(cls, k):
    return np.eye(k)[np.asarray(cls)]


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy(one_hot([0, 1, 2], 3), [0, 1, 2]) == 1.0

    def test_half_correct(self):
        assert accuracy(one_hot([0, 1, 1, 0], 2), one_hot([0, 1, 0, 1], 2)) == 0.5

    def test_tie_goes_to_lowest_index(self):
        assert accuracy(np.array([[0.5, 0.5]]), [0]) == 1.0

    def test_mask(self):
        pred = one_hot([0, 1, 1], 2)
        assert accuracy(pred, [0, 0, 1], mask=[True, False, True]) == 1.0

    def test_empty_mask(self):
        with pytest.raises(ValueError, match="empty"):
            accuracy(one_hot([0], 2), [0], mask=[False])


class TestF1:
    def test_perfect(self):
        assert unweighted_f1(one_hot([0, 1, 2], 3), [0, 1, 2], k=3) == 1.0

    def test_two_class_example(self):
        # truth (0, 0, 1), predictions (0, 1, 1)
        np.testing.assert_allclose(unweighted_f1(one_hot([0, 1, 1], 2), [0, 0, 1], k=2), 2 / 3, rtol=1e-15)

    def test_absent_class_counts_as_zero(self):
        assert unweighted_f1(one_hot([0, 1], 3), [0, 1], k=3) == pytest.approx(2 / 3)

    def test_confusion_rows_are_truth(self):
        cm = confusion_matrix(np.array([1, 1]), np.array([0, 1]), 2)
        np.testing.assert_array_equal(cm, [[0, 1], [0, 1]])


class TestSplits:
    def test_balanced_counts(self):
        plan = monte_carlo_splits(np.repeat([0, 1], 50), 10, 0.3, 0.2, seed=3)
        for s in plan:
            labels = np.repeat([0, 1], 50)
            assert np.bincount(labels[s.test]).tolist() == [15, 15]

    def test_partition(self):
        labels = np.random.default_rng(0).integers(0, 4, 83)
        pool = np.arange(100, 183)
        for s in monte_carlo_splits(labels, 5, 0.3, 0.2, seed=1, pool=pool):
            allidx = np.concatenate([s.train, s.val, s.test])
            assert len(allidx) == len(set(allidx.tolist())) == 83
            np.testing.assert_array_equal(np.sort(allidx), pool)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(3, 40), min_size=1, max_size=6), st.floats(0.1, 0.5))
    def test_per_class_share_within_one(self, counts, frac):
        alloc = stratified_counts(counts, frac)
        assert np.all(np.abs(alloc - frac * np.array(counts)) < 1 + 1e-9)
        assert alloc.sum() == int(np.floor(frac * sum(counts) + 0.5))

    def test_same_seed_same_plan(self):
        labels = np.repeat([0, 1, 2], 10)
        a = monte_carlo_splits(labels, 3, 0.3, 0.2, seed=9).to_dict()
        assert a == monte_carlo_splits(labels, 3, 0.3, 0.2, seed=9).to_dict()

    def test_test_sets_differ_across_iterations(self):
        labels = np.repeat([0, 1], 50)
        for seed in range(5):
            tests = {tuple(s.test) for s in monte_carlo_splits(labels, 10, 0.3, 0.2, seed=seed)}
            assert len(tests) == 10

    def test_tiny_class(self):
        with pytest.raises(ValueError, match="class 1 has 1 samples"):
            monte_carlo_splits([0, 0, 0, 0, 1], 1, 0.3, 0.2)


def enumerate_pvalue(d):
    d = np.asarray(d, float)
    d = d[d != 0]
    ranks = stats.rankdata(np.round(np.abs(d), 12))
    obs = ranks[d > 0].sum()
    sums = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product([0, 1], repeat=len(d))]
    return np.mean(np.array(sums) >= obs - 1e-9), np.mean(np.isclose(sums, obs))


class TestWilcoxon:
    def test_five_positive(self):
        assert wilcoxon_signed_rank([2, 3, 4, 5, 6], [1, 1, 1, 1, 1]).pvalue == 1 / 32

    def test_ten_positive(self):
        res = wilcoxon_signed_rank(np.arange(1, 11) + 0.5, np.zeros(10))
        assert res.pvalue == 1 / 1024
        assert res.pvalue < 0.006

    def test_swap_gives_complementary_tail(self, rng):
        a, b = rng.standard_normal(8), rng.standard_normal(8)
        p = wilcoxon_signed_rank(a, b).pvalue
        q = wilcoxon_signed_rank(b, a).pvalue
        _, atom = enumerate_pvalue(a - b)
        np.testing.assert_allclose(p + q, 1 + atom, rtol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scipy_exact(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal(9) + 0.3, r.standard_normal(9)
        ref = stats.wilcoxon(a, b, alternative="greater", method="exact").pvalue
        np.testing.assert_allclose(wilcoxon_signed_rank(a, b).pvalue, ref, rtol=1e-12)

    def test_ties_and_zeros_against_enumeration(self):
        a = np.array([0.5, 0.7, 0.7, 0.6, 0.9, 0.4, 0.8])
        b = np.array([0.4, 0.6, 0.6, 0.6, 0.7, 0.5, 0.7])
        expected, _ = enumerate_pvalue(a - b)
        res = wilcoxon_signed_rank(a, b)
        assert res.n == 6
        np.testing.assert_allclose(res.pvalue, expected, rtol=1e-12)

    def test_large_n_uses_convolution(self, rng):
        n = EXACT_ENUMERATION_MAX_N + 5
        a, b = rng.standard_normal(n) + 0.2, rng.standard_normal(n)
        ref = stats.wilcoxon(a, b, alternative="greater", method="exact").pvalue
        np.testing.assert_allclose(wilcoxon_signed_rank(a, b).pvalue, ref, rtol=1e-10)

    def test_all_zero_differences(self):
        with pytest.raises(ValueError, match="no information"):
            wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])

    def test_too_short(self):
        with pytest.raises(ValueError, match="at least 5"):
            wilcoxon_signed_rank([1, 2], [0, 0])
