"""Incremental classifiers sharing one contract.

Every learner emits a class-probability vector for any input (uniform before
any label is seen), absorbs single labeled examples online, and can fit a
batch of examples with an optional reset to its initial parameters.
"""
from __future__ import annotations

import inspect

import numpy as np

from guesslearn import kernels


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def xent_and_dlogits(z: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Cross-entropy ``-log softmax(z)[y]`` and its gradient ``softmax(z) - onehot(y)``.

    The top logit is split out of the log-sum-exp so ``log1p``/``expm1`` keep
    full relative precision when the loss is tiny.
    """
    top = int(np.argmax(z))
    s = np.exp(z - z[top])
    s[top] = 0.0
    lse = np.log1p(s.sum())
    logp = z - z[top] - lse
    d = np.exp(logp)
    d[y] = np.expm1(logp[y])
    return float(-logp[y]), d


def _check_finite(x: np.ndarray, what: str = "features") -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite {what}")


class Learner:
    """Base class. Subclasses hold their trainable state in ``_params``."""

    name = "learner"
    # Batch fits re-train on every labeled example so far; False means the
    # learner only needs the newest batch (k-NN just appends).
    retrains_on_history = True

    def __init__(self, n_features: int, n_classes: int):
        if n_classes < 1 or n_features < 1:
            raise ValueError("n_features and n_classes must be positive")
        self.n_features = n_features
        self.n_classes = n_classes
        self.n_labeled = 0
        self._pool_X: np.ndarray | None = None

    def _finish_init(self) -> None:
        self._initial = self.snapshot()

    # -- parameter snapshots -------------------------------------------------
    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self._params.items()}

    def restore(self, snap: dict) -> None:
        for k, v in snap.items():
            self._params[k][...] = v

    def reset(self) -> None:
        self.restore(self._initial)
        self.n_labeled = 0

    # -- prediction ----------------------------------------------------------
    def _check_dim(self, X: np.ndarray) -> None:
        if X.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[-1]}")

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        return self.predict_proba_many(x[None, :])[0]

    def predict_proba_many(self, X) -> np.ndarray:
        raise NotImplementedError

    def bind_pool(self, X: np.ndarray, score_all: bool = True) -> None:
        """Attach the episode's feature matrix so candidates can be scored by id.

        ``score_all=False`` tells the learner only single instances will be
        queried (random acquisition), so per-row caches can be skipped.
        """
        self._check_dim(X)
        self._pool_X = np.ascontiguousarray(X, dtype=np.float64)

    def pool_proba(self, ids: np.ndarray) -> np.ndarray:
        return self.predict_proba_many(self._pool_X[ids])

    # -- learning ------------------------------------------------------------
    def observe(self, x, y: int, predicted: int | None = None) -> None:
        raise NotImplementedError

    def fit_batch(self, X, y, epochs: int = 1, reset: bool = False,
                  rng: np.random.Generator | None = None) -> None:
        """Absorb a group of examples.

        With ``reset`` the initial parameters are restored first. Then
        ``epochs`` shuffled passes of the per-example update run over ``X``.
        """
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ValueError("fit_batch needs at least one example")
        self._check_dim(X)
        if rng is None:
            rng = np.random.default_rng(0)
        if reset:
            self.reset()
        for _ in range(epochs):
            self._fit_pass(X, y, rng.permutation(len(y)).astype(np.int64), rng)
        self.n_labeled = len(y) if reset or self.retrains_on_history else self.n_labeled + len(y)

    def _fit_pass(self, X, y, order, rng) -> None:
        for i in order:
            self.observe(X[i], int(y[i]))


class UniformLearner(Learner):
    """Always predicts the uniform distribution; the random-guessing baseline."""

    name = "uniform"

    def __init__(self, n_features: int, n_classes: int):
        super().__init__(n_features, n_classes)
        self._params = {}
        self._finish_init()

    def predict_proba_many(self, X):
        X = np.asarray(X)
        return np.full((X.shape[0], self.n_classes), 1.0 / self.n_classes)

    def observe(self, x, y, predicted=None):
        self.n_labeled += 1

    def _fit_pass(self, X, y, order, rng):
        pass


class Perceptron(Learner):
    """Multiclass mistake-driven Perceptron (promote truth, demote guess).

    Weights are ``C x (d+1)`` with the bias in the last column and start at
    zero, so the cold prediction is uniform.
    """

    name = "perceptron"

    def __init__(self, n_features: int, n_classes: int, lr: float = 1.0):
        super().__init__(n_features, n_classes)
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self._params = {"W": np.zeros((n_classes, n_features + 1))}
        self._finish_init()

    @property
    def W(self) -> np.ndarray:
        return self._params["W"]

    def scores(self, X) -> np.ndarray:
        W = self.W
        return np.asarray(X) @ W[:, :-1].T + W[:, -1]

    def predict_proba_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        return softmax(self.scores(X))

    def observe(self, x, y, predicted=None):
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        if predicted is None:
            predicted = int(np.argmax(self.scores(x)))
        if predicted != y:
            W = self.W
            W[y, :-1] += self.lr * x
            W[y, -1] += self.lr
            W[predicted, :-1] -= self.lr * x
            W[predicted, -1] -= self.lr
        self.n_labeled += 1

    def _fit_pass(self, X, y, order, rng):
        kernels.perceptron_pass(self.W, X, y, order, rng.random(len(order)), self.lr)


class KNN(Learner):
    """Distance-weighted k-nearest-neighbor vote over every labeled example.

    Class mass is the sum of ``1 / (distance + eps)`` over the ``k`` nearest
    stored examples, normalized. With a bound pool each pool row keeps its
    running top-k list, so an observation costs one pass over the pool.
    """

    name = "knn"
    retrains_on_history = False

    def __init__(self, n_features: int, n_classes: int, k: int = 7, eps: float = 1e-8):
        super().__init__(n_features, n_classes)
        if k < 1 or eps <= 0:
            raise ValueError("k must be >= 1 and eps > 0")
        self.k = k
        self.eps = eps
        self._X = np.empty((16, n_features))
        self._y = np.empty(16, dtype=np.int64)
        self._n = 0
        self._topk = None

    @property
    def store_size(self) -> int:
        return self._n

    @property
    def store(self) -> tuple[np.ndarray, np.ndarray]:
        return self._X[: self._n], self._y[: self._n]

    def snapshot(self) -> dict:
        X, y = self.store
        return {"X": X.copy(), "y": y.copy()}

    def restore(self, snap: dict) -> None:
        self._n = 0
        if self._topk is not None:
            self._alloc_topk()
        for x, y in zip(snap["X"], snap["y"]):
            self._append(x, int(y))

    def reset(self) -> None:
        self.restore({"X": np.empty((0, self.n_features)), "y": np.empty(0, dtype=np.int64)})
        self.n_labeled = 0

    def _alloc_topk(self) -> None:
        N = self._pool_X.shape[0]
        self._topk = (
            np.full((N, self.k), np.inf),
            np.zeros((N, self.k), dtype=np.int64),
            np.zeros(N, dtype=np.int64),
        )

    def bind_pool(self, X, score_all=True):
        super().bind_pool(X)
        self._topk = None
        if not score_all:
            return
        self._alloc_topk()
        X_s, y_s = self.store
        for x, y in zip(X_s, y_s):
            kernels.knn_topk_insert(self._pool_X, x, int(y), *self._topk)

    def _append(self, x: np.ndarray, y: int) -> None:
        if self._n == len(self._y):
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
        self._X[self._n] = x
        self._y[self._n] = y
        self._n += 1
        if self._topk is not None:
            kernels.knn_topk_insert(self._pool_X, self._X[self._n - 1], y, *self._topk)

    def observe(self, x, y, predicted=None):
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        if not 0 <= y < self.n_classes:
            raise ValueError(f"label {y} outside [0, {self.n_classes})")
        self._append(x, int(y))
        self.n_labeled += 1

    def predict_proba_many(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        self._check_dim(X)
        X_s, y_s = self.store
        return kernels.knn_query(np.ascontiguousarray(X_s), np.ascontiguousarray(y_s), X,
                                 self.k, self.n_classes, self.eps)

    def pool_proba(self, ids):
        if self._topk is None:
            return super().pool_proba(ids)
        topk_d, topk_l, counts = self._topk
        return kernels.knn_vote(topk_d[ids], topk_l[ids], counts[ids], self.n_classes, self.eps)

    def fit_batch(self, X, y, epochs=1, reset=False, rng=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if len(y) == 0:
            raise ValueError("fit_batch needs at least one example")
        self._check_dim(X)
        if reset:
            self.reset()
        for x, label in zip(X, y):
            self.observe(x, int(label))


class SoftmaxHead(Learner):
    """Multinomial logistic regression trained by per-example SGD.

    Stands in for a freshly initialized linear head on frozen features.
    ``init_scale=0`` (default) starts at zero weights, i.e. uniform output.
    """

    name = "softmax"

    def __init__(self, n_features: int, n_classes: int, lr: float = 0.1,
                 init_scale: float = 0.0, rng: np.random.Generator | None = None):
        super().__init__(n_features, n_classes)
        self.lr = lr
        W = np.zeros((n_classes, n_features + 1))
        if init_scale > 0:
            rng = rng if rng is not None else np.random.default_rng(0)
            W[:, :-1] = init_scale * rng.standard_normal((n_classes, n_features))
        self._params = {"W": W}
        self._finish_init()

    @property
    def W(self) -> np.ndarray:
        return self._params["W"]

    def predict_proba_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        W = self.W
        return softmax(X @ W[:, :-1].T + W[:, -1])

    def loss_and_grad(self, x, y: int) -> tuple[float, np.ndarray]:
        """Cross-entropy ``-log p_y`` and its gradient with respect to W."""
        x = np.asarray(x, dtype=np.float64)
        xb = np.append(x, 1.0)
        loss, dz = xent_and_dlogits(self.W @ xb, y)
        return loss, np.outer(dz, xb)

    def observe(self, x, y, predicted=None):
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        _check_finite(x)
        _, g = self.loss_and_grad(x, y)
        self.W[...] -= self.lr * g
        self.n_labeled += 1

    def _fit_pass(self, X, y, order, rng):
        _check_finite(X)
        kernels.softmax_pass(self.W, X, y, order, self.lr)


class MLP(Learner):
    """One rectified hidden layer followed by a softmax output.

    Hidden weights use He initialization from the learner stream; the output
    layer starts at zero so the cold prediction is uniform.
    """

    name = "mlp"

    def __init__(self, n_features: int, n_classes: int, hidden: int = 128, lr: float = 0.01,
                 rng: np.random.Generator | None = None):
        super().__init__(n_features, n_classes)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden = hidden
        self.lr = lr
        self._params = {
            "W1": rng.standard_normal((hidden, n_features)) * np.sqrt(2.0 / n_features),
            "b1": np.zeros(hidden),
            "W2": np.zeros((n_classes, hidden)),
            "b2": np.zeros(n_classes),
        }
        self._finish_init()

    @property
    def params(self) -> dict:
        return self._params

    def predict_proba_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_dim(X)
        P = self._params
        with np.errstate(invalid="ignore", over="ignore"):
            H = np.maximum(X @ P["W1"].T + P["b1"], 0.0)
            Z = H @ P["W2"].T + P["b2"]
        if not np.all(np.isfinite(Z)):
            raise FloatingPointError("non-finite activations in MLP forward pass")
        return softmax(Z)

    def forward(self, x) -> np.ndarray:
        return self.predict_proba(x)

    def loss_and_grad(self, x, y: int) -> tuple[float, dict]:
        P = self._params
        x = np.asarray(x, dtype=np.float64)
        a = P["W1"] @ x + P["b1"]
        h = np.maximum(a, 0.0)
        loss, dz = xent_and_dlogits(P["W2"] @ h + P["b2"], y)
        dh = P["W2"].T @ dz
        da = dh * (a > 0)
        grads = {
            "W1": np.outer(da, x),
            "b1": da,
            "W2": np.outer(dz, h),
            "b2": dz,
        }
        return loss, grads

    def observe(self, x, y, predicted=None):
        x = np.asarray(x, dtype=np.float64)
        self._check_dim(x)
        _check_finite(x)
        _, grads = self.loss_and_grad(x, y)
        for k, g in grads.items():
            self._params[k] -= self.lr * g
        self.n_labeled += 1

    def _fit_pass(self, X, y, order, rng):
        for i in order:
            _, grads = self.loss_and_grad(X[i], int(y[i]))
            for k, g in grads.items():
                self._params[k] -= self.lr * g


LEARNERS = {
    "uniform": UniformLearner,
    "perceptron": Perceptron,
    "knn": KNN,
    "softmax": SoftmaxHead,
    "mlp": MLP,
}


def make_learner(name: str, n_features: int, n_classes: int,
                 rng: np.random.Generator | None = None, **params) -> Learner:
    """Build a learner by name; only parameters the learner accepts are passed."""
    try:
        cls = LEARNERS[name]
    except KeyError:
        raise ValueError(f"unknown learner {name!r}; choose from {sorted(LEARNERS)}") from None
    accepted = inspect.signature(cls.__init__).parameters
    kwargs = {k: v for k, v in params.items() if v is not None and k in accepted}
    if "rng" in accepted:
        kwargs["rng"] = rng
    return cls(n_features, n_classes, **kwargs)


def learner_factory(name: str, **params):
    """Factory suitable for ``run_episode``: built with the episode's learner stream."""
    def build(n_features: int, n_classes: int, rng: np.random.Generator) -> Learner:
        return make_learner(name, n_features, n_classes, rng, **params)

    build.learner_name = name
    return build
