import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from guesslearn.oracle import (
    cluster_first_oracle,
    expected_mapping_errors,
    kmeans,
    medoid_indices,
    oracle_band,
    simulate_mapping_with_feedback,
)
from guesslearn.protocol import Pool


def exact_mapping_expectation(C):
    """Enumerate every guess sequence of the feedback game; exact rational mean."""
    total = Fraction(0)
    # Visiting order is irrelevant, so fix it and enumerate uniform guesses.
    def rec(remaining, truths, p):
        nonlocal total
        if not truths:
            return
        t = truths[0]
        for g in remaining:
            q = p / len(remaining)
            if g != t:
                total += q
            rec([r for r in remaining if r != t], truths[1:], q)
    for perm in itertools.permutations(range(C)):
        rec(list(range(C)), list(perm), Fraction(1, math.factorial(C)))
    return total


class TestMappingExpectation:
    def test_mnist_value(self):
        assert expected_mapping_errors(10) == pytest.approx(7.0710317, abs=1e-7)
        assert round(expected_mapping_errors(10), 2) == 7.07

    def test_small(self):
        assert expected_mapping_errors(1) == 0.0
        assert expected_mapping_errors(2) == 0.5

    @pytest.mark.parametrize("C", [1, 2, 3, 4, 5])
    def test_matches_enumeration(self, C):
        assert expected_mapping_errors(C) == pytest.approx(float(exact_mapping_expectation(C)), abs=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            expected_mapping_errors(0)


class TestSimulation:
    def test_one_class(self):
        sim = simulate_mapping_with_feedback(1, 1000, seed=0)
        assert sim.mean == 0.0 and sim.stderr == 0.0

    def test_c10(self):
        sim = simulate_mapping_with_feedback(10, 100_000, seed=0)
        assert abs(sim.mean - 7.0710317) < 0.05

    def test_c2(self):
        sim = simulate_mapping_with_feedback(2, 100_000, seed=1)
        assert abs(sim.mean - 0.5) < 0.01

    @pytest.mark.parametrize("C", [3, 7, 13, 20])
    def test_within_five_standard_errors(self, C):
        sim = simulate_mapping_with_feedback(C, 100_000, seed=C)
        assert abs(sim.mean - expected_mapping_errors(C)) < 5 * sim.stderr

    def test_stderr_scales(self):
        small = simulate_mapping_with_feedback(10, 10, seed=0).stderr
        big = simulate_mapping_with_feedback(10, 100_000, seed=0).stderr
        assert 50 < small / big < 200  # ~ sqrt(10^4) = 100

    def test_deterministic(self):
        assert simulate_mapping_with_feedback(6, 500, 3) == simulate_mapping_with_feedback(6, 500, 3)


class TestKMeans:
    def test_objective_non_increasing(self, rng):
        X = rng.standard_normal((300, 4))
        model = kmeans(X, 6, iters=100, seed=1)
        h = model.objective_history
        assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))

    def test_nearest_centroid_at_convergence(self, rng):
        X = np.vstack([rng.normal(c, 0.1, (30, 2)) for c in (-5, 0, 5)])
        model = kmeans(X, 3, seed=0)
        d = ((X[:, None, :] - model.centroids[None]) ** 2).sum(-1)
        np.testing.assert_array_equal(model.assignments, d.argmin(1))

    def test_medoid_is_member_and_minimizes(self, rng):
        X = rng.standard_normal((60, 3))
        model = kmeans(X, 4, seed=2)
        for c, m in enumerate(model.medoids):
            members = np.flatnonzero(model.assignments == c)
            assert m in members
            sums = [np.linalg.norm(X[members] - X[i], axis=1).sum() for i in members]
            assert np.linalg.norm(X[members] - X[m], axis=1).sum() == pytest.approx(min(sums))

    def test_empty_cluster_reseeded(self):
        # Three identical points but k=2: one cluster must be re-seeded.
        X = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [9.0, 9.0]])
        model = kmeans(X, 3, seed=0)
        assert set(model.assignments) == {0, 1, 2}

    def test_medoid_helper_skips_empty(self):
        out = medoid_indices(np.zeros((2, 2)), np.array([0, 0]), 2)
        assert out[1] == -1


class TestClusterFirstOracle:
    def test_point_masses(self):
        X = np.repeat(np.eye(4) * 10, 5, axis=0)
        pool = Pool(X, np.repeat(np.arange(4), 5), 4)
        res = cluster_first_oracle(pool, 4, seed=0)
        assert res.errors == 0 and res.purity == [1.0] * 4

    def test_minority_mislabeled(self):
        X = np.vstack([np.zeros((9, 2)), [[1.0, 1.0]]])
        pool = Pool(X, [0] * 9 + [1], 2)
        res = cluster_first_oracle(pool, 1, seed=0)
        assert res.errors == 1 and res.purity == [0.9]


class TestBand:
    def test_mnist_band(self):
        band = oracle_band(10, (2, 4), (4, 6))
        assert band.band == (7, 12)
        assert band.e_map == pytest.approx(7.0710317, abs=1e-7)

    def test_zero_residuals(self):
        assert oracle_band(10, (0, 0), (0, 0)).band == (7, 8)

    def test_single_class(self):
        assert oracle_band(1).band == (0, 0)

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            oracle_band(10, (4, 2), (4, 6))

    def test_bounds_and_monotone(self):
        for C in range(2, 15):
            e = expected_mapping_errors(C)
            for b in itertools.product(range(4), repeat=2):
                if b[0] > b[1]:
                    continue
                for n in [(0, 0), (1, 3), (4, 6)]:
                    lo, hi = oracle_band(C, b, n).band
                    assert lo <= hi <= math.ceil(e) + b[1] + n[1]
                    wider = oracle_band(C, (max(b[0] - 1, 0), b[1] + 1), n).band
                    assert wider[0] <= lo and wider[1] >= hi
