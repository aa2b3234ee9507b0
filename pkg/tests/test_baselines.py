"""Tests for the classic and cumulative-score split-CP baselines."""

import numpy as np
import pytest

from rrcp.baselines import (
    calibrate_aps,
    calibrate_classic,
    finite_sample_quantile,
    predict_aps,
    predict_aps_batch_outcomes,
    predict_classic,
    predict_classic_batch_outcomes,
    predict_classic_detailed,
    ApsCpModel,
    ClassicCpModel,
)
from rrcp.core import Dataset, ProbabilityVector, ValidationError


def pv(*values):
    return ProbabilityVector(np.array(values, dtype=np.float64))


def dataset_with_scores(scores):
    """K=2 dataset whose classic scores equal the given values (label 1)."""
    rows = [[1.0 - s, s] for s in scores]
    return Dataset.from_arrays(np.array(rows), [1] * len(scores))


class TestQuantile:
    def test_four_scores_alpha_half(self):
        # order statistics by hand: ceil(5 * 0.5) = 3rd smallest
        q = finite_sample_quantile(np.array([0.1, 0.2, 0.3, 0.9]), alpha=0.5)
        assert q == 0.3

    def test_single_score(self):
        # ceil(2 * 0.4) = 1st smallest
        q = finite_sample_quantile(np.array([0.4]), alpha=0.6)
        assert q == 0.4

    def test_clamps_to_one_when_index_exceeds_n(self):
        q = finite_sample_quantile(np.array([0.2, 0.5, 0.7]), alpha=0.01)
        assert q == 1.0

    def test_empty_scores_rejected(self):
        with pytest.raises(ValidationError):
            finite_sample_quantile(np.array([]), alpha=0.5)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            finite_sample_quantile(np.array([0.5]), alpha=0.0)
        with pytest.raises(ValueError):
            finite_sample_quantile(np.array([0.5]), alpha=1.0)


class TestCalibrateClassic:
    def test_matches_order_statistic(self):
        cali = dataset_with_scores([0.1, 0.2, 0.3, 0.9])
        model = calibrate_classic(cali, alpha=0.5)
        assert model.q_alpha == pytest.approx(0.3, abs=1e-15)
        assert model.n_cali == 4

    def test_shuffle_invariant(self):
        rng = np.random.default_rng(5)
        scores = list(rng.random(20))
        a = calibrate_classic(dataset_with_scores(scores), alpha=0.25)
        rng.shuffle(scores)
        b = calibrate_classic(dataset_with_scores(scores), alpha=0.25)
        assert a.q_alpha == b.q_alpha


class TestCalibrateAps:
    def test_two_samples(self):
        # APS scores {0.7, 0.9}: rows where the true label is ranked second
        rows = np.array([[0.3, 0.4, 0.3], [0.5, 0.4, 0.1]])
        # row 0: sorted (0.4, 0.3, 0.3) -> label 1 at rank 2 -> 0.7
        # row 1: sorted (0.5, 0.4, 0.1) -> label 2 at rank 2 -> 0.9
        cali = Dataset.from_arrays(rows, [1, 2])
        model = calibrate_aps(cali, alpha=0.5)
        assert model.q_alpha == pytest.approx(0.9)

    def test_degenerate_distribution(self):
        # all APS scores equal s*: any alpha with index <= n returns s*
        rows = np.array([[0.8, 0.2]] * 5)
        cali = Dataset.from_arrays(rows, [1] * 5)
        model = calibrate_aps(cali, alpha=0.5)
        assert model.q_alpha == pytest.approx(0.8)


class TestPredictClassic:
    def test_threshold_keeps_high_probability(self):
        m = ClassicCpModel(q_alpha=0.5, alpha=0.1, n_cali=10)
        assert tuple(predict_classic(pv(0.1, 0.7, 0.2), m)) == (2,)

    def test_quantile_one_admits_all(self):
        m = ClassicCpModel(q_alpha=1.0, alpha=0.1, n_cali=10)
        assert tuple(predict_classic(pv(0.1, 0.7, 0.2), m)) == (1, 2, 3)

    def test_empty_set_falls_back_to_argmax(self):
        m = ClassicCpModel(q_alpha=0.0, alpha=0.1, n_cali=10)
        ps, fallback = predict_classic_detailed(pv(0.1, 0.7, 0.2), m)
        assert tuple(ps) == (2,)
        assert fallback

    def test_size_nondecreasing_in_q_alpha(self):
        rng = np.random.default_rng(2)
        p = ProbabilityVector(rng.dirichlet(np.ones(6)))
        sizes = [
            predict_classic(p, ClassicCpModel(q_alpha=q, alpha=0.1, n_cali=5)).size
            for q in np.linspace(0.0, 1.0, 21)
        ]
        assert sizes == sorted(sizes)


class TestPredictAps:
    def test_prefix_examples(self):
        p = pv(0.1, 0.7, 0.2)  # sorted (0.7, 0.2, 0.1)
        assert predict_aps(p, ApsCpModel(q_alpha=0.7, alpha=0.1, n_cali=5)).size == 1
        assert predict_aps(p, ApsCpModel(q_alpha=0.85, alpha=0.1, n_cali=5)).size == 2

    def test_quantile_one_gives_full_set(self):
        p = pv(0.1, 0.7, 0.2)
        ps = predict_aps(p, ApsCpModel(q_alpha=1.0, alpha=0.1, n_cali=5))
        assert ps.size == 3

    @pytest.mark.parametrize("seed", range(5))
    def test_sets_nested_as_q_grows(self, seed):
        rng = np.random.default_rng(seed)
        p = ProbabilityVector(rng.dirichlet(np.ones(6)))
        previous = set()
        for q in np.linspace(0.05, 1.0, 20):
            current = set(predict_aps(p, ApsCpModel(q_alpha=q, alpha=0.1, n_cali=5)))
            assert previous <= current
            previous = current


class TestBatchEquivalence:
    @pytest.mark.parametrize("seed", range(4))
    def test_classic_batch_matches_scalar(self, seed):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(5), size=40)
        labels = rng.integers(1, 6, size=40)
        m = ClassicCpModel(q_alpha=float(rng.random()), alpha=0.1, n_cali=10)
        covered, sizes, fallbacks = predict_classic_batch_outcomes(probs, labels, m)
        n_fallback = 0
        for i in range(40):
            ps, fb = predict_classic_detailed(ProbabilityVector(probs[i]), m)
            n_fallback += fb
            assert covered[i] == (labels[i] in ps)
            assert sizes[i] == ps.size
        assert fallbacks == n_fallback

    @pytest.mark.parametrize("seed", range(4))
    def test_aps_batch_matches_scalar(self, seed):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.ones(5), size=40)
        labels = rng.integers(1, 6, size=40)
        m = ApsCpModel(q_alpha=float(rng.uniform(0.2, 1.0)), alpha=0.1, n_cali=10)
        covered, sizes, _ = predict_aps_batch_outcomes(probs, labels, m)
        for i in range(40):
            ps = predict_aps(ProbabilityVector(probs[i]), m)
            assert covered[i] == (labels[i] in ps)
            assert sizes[i] == ps.size
