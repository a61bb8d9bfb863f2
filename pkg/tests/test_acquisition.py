import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from guesslearn.acquisition import (
    Strategy,
    score_confidence,
    score_entropy,
    score_least_confidence,
    score_margin,
    score_rows,
    select,
    select_from_probs,
)
from guesslearn.learners import UniformLearner


def random_probs(rng, m, C):
    P = rng.random((m, C)) + 1e-3
    return P / P.sum(1, keepdims=True)


class TestScores:
    def test_confidence(self):
        assert score_confidence([1, 0, 0, 0]) == 1.0
        assert score_confidence(np.full(10, 0.1)) == pytest.approx(0.1)
        assert score_confidence([0.5, 0.3, 0.2]) == 0.5

    def test_least_confidence_uses_max(self):
        assert score_least_confidence([0.6, 0.4]) == 0.6

    def test_margin(self):
        assert score_margin([0.5, 0.5, 0.0]) == 0.0
        assert score_margin([0.7, 0.2, 0.1]) == pytest.approx(0.5)
        assert score_margin([1.0, 0.0]) == 1.0
        with pytest.raises(ValueError):
            score_margin([1.0])

    def test_entropy(self):
        assert score_entropy([1.0, 0.0, 0.0]) == 0.0
        assert score_entropy(np.full(10, 0.1)) == pytest.approx(2.302585, abs=1e-6)
        assert score_entropy([0.5, 0.5]) == pytest.approx(0.693147, abs=1e-6)

    def test_row_scores_match_scalar(self, rng):
        P = random_probs(rng, 30, 5)
        np.testing.assert_allclose(score_rows("margin", P), [score_margin(p) for p in P])
        np.testing.assert_allclose(score_rows("entropy", P), [score_entropy(p) for p in P])
        np.testing.assert_allclose(score_rows("confidence", P), [score_confidence(p) for p in P])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(0, 1)))
def test_entropy_bounded_by_uniform(raw):
    if raw.sum() <= 0:
        return
    p = raw / raw.sum()
    h = score_entropy(p)
    assert -1e-12 <= h <= math.log(len(p)) + 1e-12


class TestSelect:
    def test_least_confidence_picks_smaller_max(self, rng):
        P = np.array([[0.9, 0.1], [0.6, 0.4]])
        assert select_from_probs("least_confidence", np.array([0, 1]), P, rng) == 1

    def test_uniform_beats_any_nonuniform_for_least_confidence(self, rng):
        P = np.vstack([random_probs(rng, 20, 4), np.full((1, 4), 0.25)])
        assert select_from_probs("least_confidence", np.arange(21), P, rng) == 20

    def test_least_confidence_matches_exhaustive_scan(self, rng):
        for _ in range(20):
            P = random_probs(rng, 50, 6)
            ids = rng.permutation(200)[:50]
            best, best_id = float("inf"), None
            for i, p in zip(ids, P):
                if max(p) < best:
                    best, best_id = max(p), i
            assert select_from_probs("least_confidence", ids, P, rng) == best_id

    def test_singleton(self, rng):
        for s in Strategy:
            learner = UniformLearner(2, 3)
            learner.bind_pool(np.zeros((5, 2)))
            assert select(s, np.array([4]), learner, rng) == 4

    def test_empty_pool_errors(self, rng):
        with pytest.raises(ValueError):
            select("entropy", np.array([], dtype=int), UniformLearner(2, 3), rng)

    @pytest.mark.parametrize("strategy", list(Strategy))
    def test_ties_are_uniform(self, strategy):
        # Fresh learner: every candidate ties. Chi-square at 99% with 9 dof is 21.67.
        rng = np.random.default_rng(0)
        learner = UniformLearner(2, 3)
        learner.bind_pool(np.zeros((10, 2)))
        ids = np.arange(10)
        counts = np.bincount([select(strategy, ids, learner, rng) for _ in range(10_000)],
                             minlength=10)
        chi2 = ((counts - 1000) ** 2 / 1000).sum()
        assert chi2 < 21.666

    def test_never_returns_labeled(self, rng):
        learner = UniformLearner(2, 3)
        learner.bind_pool(np.zeros((10, 2)))
        unl = np.array([1, 3, 8])
        for s in Strategy:
            for _ in range(50):
                assert select(s, unl, learner, rng) in unl

    def test_binary_uncertainty_strategies_coincide(self, rng):
        for _ in range(200):
            p1 = rng.random(40)
            P = np.column_stack([p1, 1 - p1])
            ids = np.arange(40)
            picks = {s: select_from_probs(s, ids, P, rng)
                     for s in ("least_confidence", "margin", "entropy")}
            # Brute force: the most uncertain binary vector has p closest to 1/2.
            oracle = int(np.argmin(np.abs(p1 - 0.5)))
            assert set(picks.values()) == {oracle}

    def test_confidence_and_least_confidence_are_opposite_ends(self, rng):
        P = random_probs(rng, 30, 5)
        mx = P.max(1)
        ids = np.arange(30)
        assert select_from_probs("confidence", ids, P, rng) == int(np.argmax(mx))
        assert select_from_probs("least_confidence", ids, P, rng) == int(np.argmin(mx))

    def test_non_finite_scores_rejected(self, rng):
        P = np.array([[np.nan, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError):
            select_from_probs("confidence", np.arange(2), P, rng)
