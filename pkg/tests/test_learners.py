import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guesslearn.data import generate_margin_dataset
from guesslearn.learners import KNN, MLP, LEARNERS, Perceptron, SoftmaxHead, make_learner
from guesslearn.protocol import TrackConfig, check_prob_vector, perceptron_mistake_bound, run_episode


def central_diff(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


@pytest.mark.parametrize("name", sorted(LEARNERS))
def test_cold_start_is_uniform(name, rng):
    learner = make_learner(name, 6, 4, rng)
    p = learner.predict_proba(rng.standard_normal(6))
    np.testing.assert_allclose(p, 0.25)


@pytest.mark.parametrize("name", sorted(LEARNERS))
def test_outputs_valid_after_learning(name, rng):
    learner = make_learner(name, 6, 4, rng)
    for _ in range(30):
        learner.observe(rng.standard_normal(6), int(rng.integers(4)))
        check_prob_vector(learner.predict_proba(rng.standard_normal(6)), 4)
    learner.fit_batch(rng.standard_normal((10, 6)), rng.integers(0, 4, 10), rng=rng)
    for p in learner.predict_proba_many(rng.standard_normal((5, 6))):
        check_prob_vector(p, 4)


@pytest.mark.parametrize("name", sorted(LEARNERS))
def test_dimension_mismatch(name, rng):
    learner = make_learner(name, 6, 4, rng)
    with pytest.raises(ValueError):
        learner.predict_proba(np.zeros(5))


class TestPerceptron:
    def test_dominant_row(self):
        p = Perceptron(3, 5)
        p.W[3, :3] = [1.0, 1.0, 1.0]
        assert int(np.argmax(p.predict_proba(np.ones(3)))) == 3

    def test_softmax_sums_to_one(self, rng):
        p = Perceptron(8, 6)
        p.W[...] = rng.standard_normal(p.W.shape)
        for _ in range(20):
            assert abs(p.predict_proba(rng.standard_normal(8)).sum() - 1) < 1e-6

    def test_correct_prediction_leaves_state(self, rng):
        p = Perceptron(4, 3)
        p.W[...] = rng.standard_normal(p.W.shape)
        before = p.W.copy()
        x = rng.standard_normal(4)
        p.observe(x, int(np.argmax(p.scores(x))))
        np.testing.assert_array_equal(p.W, before)

    def test_single_mistake_update_by_hand(self):
        p = Perceptron(3, 4, lr=0.5)
        x = np.array([1.0, -2.0, 3.0])
        p.observe(x, 2, predicted=0)
        np.testing.assert_array_equal(p.W[2], [0.5, -1.0, 1.5, 0.5])
        np.testing.assert_array_equal(p.W[0], [-0.5, 1.0, -1.5, -0.5])
        np.testing.assert_array_equal(p.W[[1, 3]], 0.0)

    def test_batch_of_one_equals_online_update(self, rng):
        a, b = Perceptron(5, 3), Perceptron(5, 3)
        a.W[...] = b.W[...] = rng.standard_normal((3, 6))
        x, y = rng.standard_normal(5), 1
        a.observe(x, y)
        b.fit_batch(x[None], [y], epochs=1, rng=rng)
        np.testing.assert_allclose(a.W, b.W)

    def test_sequential_single_batches_reproduce_online(self, rng):
        X = rng.standard_normal((80, 4))
        y = rng.integers(0, 3, 80)
        a, b = Perceptron(4, 3), Perceptron(4, 3)
        a.W[...] = b.W[...] = 0.01 * rng.standard_normal((3, 5))
        for xi, yi in zip(X, y):
            a.observe(xi, int(yi))
            b.fit_batch(xi[None], [yi], epochs=1, reset=False, rng=rng)
        np.testing.assert_allclose(a.W, b.W)

    @pytest.mark.parametrize("seed", range(3))
    def test_mistake_bound_any_order(self, seed):
        pool = generate_margin_dataset(400, R=5.0, gamma=0.5, seed=seed, dim=3)
        # With the bias column the effective radius is sqrt(R^2 + 1).
        bound = perceptron_mistake_bound(np.sqrt(5.0 ** 2 + 1), 0.5)
        for perm_seed in range(5):
            order = np.random.default_rng(perm_seed).permutation(len(pool))
            p = Perceptron(3, 2)
            mistakes = 0
            for i in order:
                pred = int(np.argmax(p.scores(pool.X[i])))
                mistakes += pred != pool.y[i]
                p.observe(pool.X[i], int(pool.y[i]), predicted=pred)
            assert mistakes <= bound


class TestKNN:
    def brute(self, store_X, store_y, x, k, C, eps):
        d = np.sqrt(((store_X - x) ** 2).sum(1))
        order = np.argsort(d, kind="stable")[:k]
        mass = np.zeros(C)
        for j in order:
            mass[store_y[j]] += 1 / (d[j] + eps)
        return mass / mass.sum()

    def test_empty_store_uniform(self):
        np.testing.assert_allclose(KNN(3, 4).predict_proba(np.zeros(3)), 0.25)

    def test_single_neighbor(self):
        knn = KNN(3, 4)
        knn.observe(np.ones(3), 2)
        np.testing.assert_allclose(knn.predict_proba(np.zeros(3)), [0, 0, 1, 0])

    def test_matches_exhaustive_neighbor_oracle(self, rng):
        knn = KNN(5, 3, k=7)
        X, y = rng.standard_normal((20, 5)), rng.integers(0, 3, 20)
        for xi, yi in zip(X, y):
            knn.observe(xi, int(yi))
        for q in rng.standard_normal((15, 5)):
            np.testing.assert_allclose(knn.predict_proba(q), self.brute(X, y, q, 7, 3, 1e-8),
                                       rtol=1e-9)

    def test_bound_pool_matches_direct_query(self, rng):
        pool_X = rng.standard_normal((40, 5))
        a, b = KNN(5, 3), KNN(5, 3)
        a.bind_pool(pool_X)
        for xi, yi in zip(rng.standard_normal((12, 5)), rng.integers(0, 3, 12)):
            a.observe(xi, int(yi))
            b.observe(xi, int(yi))
        np.testing.assert_allclose(a.pool_proba(np.arange(40)), b.predict_proba_many(pool_X),
                                   rtol=1e-9)

    def test_store_grows_without_dedup(self):
        knn = KNN(2, 2)
        knn.observe(np.zeros(2), 0)
        assert knn.store_size == 1
        knn.observe(np.zeros(2), 0)
        assert knn.store_size == 2

    def test_stored_points_predict_themselves(self, rng):
        knn = KNN(4, 5)
        X = rng.standard_normal((5, 4))
        for c in range(5):
            knn.observe(X[c], c)
        for c in range(5):
            assert int(np.argmax(knn.predict_proba(X[c]))) == c

    def test_reset_then_fit_equals_fresh(self, rng):
        X, y = rng.standard_normal((10, 3)), rng.integers(0, 2, 10)
        a = KNN(3, 2)
        a.bind_pool(rng.standard_normal((6, 3)))
        a.observe(rng.standard_normal(3), 1)
        a.fit_batch(X, y, reset=True)
        b = KNN(3, 2)
        b.bind_pool(a._pool_X)
        b.fit_batch(X, y)
        np.testing.assert_array_equal(a.store[0], b.store[0])
        np.testing.assert_allclose(a.pool_proba(np.arange(6)), b.pool_proba(np.arange(6)))


class TestSoftmaxHead:
    def test_zero_gradient_at_optimum(self):
        head = SoftmaxHead(2, 3, lr=0.1)
        head.W[1, -1] = 1e3  # p is numerically onehot(1)
        before = head.W.copy()
        head.observe(np.array([0.3, -0.2]), 1)
        np.testing.assert_allclose(head.W, before, atol=1e-9)

    def test_step_decreases_loss(self, rng):
        head = SoftmaxHead(6, 4, lr=0.01, init_scale=0.5, rng=rng)
        for _ in range(20):
            x, y = rng.standard_normal(6), int(rng.integers(4))
            before, _ = head.loss_and_grad(x, y)
            head.observe(x, y)
            after, _ = head.loss_and_grad(x, y)
            assert after < before

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(10):
            d, C = int(rng.integers(1, 12)), int(rng.integers(2, 6))
            head = SoftmaxHead(d, C, init_scale=1.0, rng=rng)
            x, y = rng.standard_normal(d), int(rng.integers(C))
            _, g = head.loss_and_grad(x, y)
            num = central_diff(lambda: head.loss_and_grad(x, y)[0], head.W)
            assert rel_err(g, num) < 1e-4

    def test_non_finite_features(self):
        with pytest.raises(ValueError):
            SoftmaxHead(2, 2).observe(np.array([np.nan, 0.0]), 0)

    def test_batch_fit_reduces_loss_on_separable_set(self, rng):
        X = np.vstack([rng.normal(-2, 0.3, (20, 2)), rng.normal(2, 0.3, (20, 2))])
        y = np.repeat([0, 1], 20)
        head = SoftmaxHead(2, 2)
        loss = lambda: sum(head.loss_and_grad(x, int(t))[0] for x, t in zip(X, y))
        before = loss()
        head.fit_batch(X, y, epochs=1, rng=rng)
        assert loss() <= before

    def test_reset_restores_initial(self, rng):
        head = SoftmaxHead(3, 2, init_scale=0.3, rng=rng)
        init = head.W.copy()
        X, y = rng.standard_normal((8, 3)), rng.integers(0, 2, 8)
        head.fit_batch(X, y, rng=np.random.default_rng(1))
        head.fit_batch(X, y, reset=True, rng=np.random.default_rng(1))
        fresh = SoftmaxHead(3, 2)
        fresh.W[...] = init
        fresh.fit_batch(X, y, rng=np.random.default_rng(1))
        np.testing.assert_array_equal(head.W, fresh.W)


class TestMLP:
    def test_zero_state_uniform(self, rng):
        mlp = MLP(5, 4, hidden=8, rng=rng)
        for v in mlp.params.values():
            v[...] = 0
        np.testing.assert_allclose(mlp.forward(rng.standard_normal(5)), 0.25)

    def test_output_sums_to_one_and_is_deterministic(self, rng):
        mlp = MLP(5, 4, hidden=8, rng=rng)
        for v in mlp.params.values():
            v[...] = rng.standard_normal(v.shape)
        x = rng.standard_normal(5)
        p = mlp.forward(x)
        assert abs(p.sum() - 1) < 1e-6
        np.testing.assert_array_equal(p, mlp.forward(x))

    def test_gradients_match_finite_differences(self, rng):
        for _ in range(10):
            d, h, C = (int(v) for v in rng.integers([1, 2, 2], [10, 10, 6]))
            mlp = MLP(d, C, hidden=h, rng=rng)
            for v in mlp.params.values():
                v[...] = rng.standard_normal(v.shape)
            x, y = rng.standard_normal(d), int(rng.integers(C))
            _, grads = mlp.loss_and_grad(x, y)
            for k, g in grads.items():
                num = central_diff(lambda: mlp.loss_and_grad(x, y)[0], mlp.params[k])
                assert rel_err(g, num) < 1e-4, k

    def test_non_finite_activation(self, rng):
        mlp = MLP(2, 2, hidden=3, rng=rng)
        mlp.params["W2"][...] = np.inf
        with pytest.raises(FloatingPointError):
            mlp.forward(np.ones(2))

    def test_reset_then_fit_equals_fresh(self, rng):
        X, y = rng.standard_normal((6, 4)), rng.integers(0, 3, 6)
        a = MLP(4, 3, hidden=5, rng=np.random.default_rng(3))
        b = MLP(4, 3, hidden=5, rng=np.random.default_rng(3))
        a.fit_batch(X[:3], y[:3], rng=np.random.default_rng(0))
        a.fit_batch(X, y, reset=True, rng=np.random.default_rng(1))
        b.fit_batch(X, y, rng=np.random.default_rng(1))
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])


def test_fit_batch_rejects_empty(rng):
    for name in LEARNERS:
        with pytest.raises(ValueError):
            make_learner(name, 3, 2, rng).fit_batch(np.empty((0, 3)), [])


def test_unknown_learner():
    with pytest.raises(ValueError):
        make_learner("svm", 3, 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), n=st.integers(1, 60))
def test_perceptron_episode_respects_bound(seed, n):
    pool = generate_margin_dataset(n, R=4.0, gamma=0.8, seed=seed, dim=2)
    tr = run_episode(pool, lambda d, c, r: Perceptron(d, c), "random", TrackConfig(), seed)
    assert tr.final_error <= perceptron_mistake_bound(np.sqrt(4.0 ** 2 + 1), 0.8)


@pytest.mark.parametrize("name", ["perceptron", "softmax", "mlp", "knn"])
def test_single_example_batch_matches_online_update(name, rng):
    """A one-example batch fit from the same state equals one online update."""
    X, y = rng.standard_normal((12, 5)), rng.integers(0, 3, 12)
    a = make_learner(name, 5, 3, np.random.default_rng(7))
    b = make_learner(name, 5, 3, np.random.default_rng(7))
    if name == "perceptron":  # same tie-free start; cold ties are broken by different streams
        a.W[...] = b.W[...] = rng.standard_normal(a.W.shape)
    for i in range(11):
        a.observe(X[i], int(y[i]))
        b.fit_batch(X[i:i + 1], y[i:i + 1], rng=np.random.default_rng(i))
    probe = rng.standard_normal((4, 5))
    np.testing.assert_allclose(a.predict_proba_many(probe), b.predict_proba_many(probe),
                               rtol=1e-12, atol=1e-14)
