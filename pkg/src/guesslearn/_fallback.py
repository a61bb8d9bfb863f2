"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same in-place semantics. ``guesslearn.kernels`` picks one at import time.
"""
import numpy as np


def knn_topk_insert(pool_X, x, label, topk_d, topk_l, counts):
    """Offer one newly stored example to every pool row's running top-k list.

    Rows keep their neighbors sorted by distance; an equal distance never
    displaces an earlier entry, so the lists match a stable sort of the store.
    """
    k = topk_d.shape[1]
    diff = pool_X - x
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    cand_d = np.concatenate([topk_d, d[:, None]], axis=1)
    cand_l = np.concatenate([topk_l, np.full((len(d), 1), label, dtype=topk_l.dtype)], axis=1)
    order = np.argsort(cand_d, axis=1, kind="stable")[:, :k]
    topk_d[:] = np.take_along_axis(cand_d, order, axis=1)
    topk_l[:] = np.take_along_axis(cand_l, order, axis=1)
    np.minimum(counts + 1, k, out=counts)


def knn_vote(topk_d, topk_l, counts, n_classes, eps):
    m, k = topk_d.shape
    probs = np.zeros((m, n_classes))
    valid = np.arange(k)[None, :] < counts[:, None]
    w = np.where(valid, 1.0 / (np.where(valid, topk_d, 0.0) + eps), 0.0)
    rows = np.repeat(np.arange(m), k)
    np.add.at(probs, (rows, np.where(valid, topk_l, 0).ravel()), w.ravel())
    empty = counts == 0
    probs[empty] = 1.0
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def knn_query(store_X, store_y, queries, k, n_classes, eps):
    m = queries.shape[0]
    n = store_X.shape[0]
    if n == 0:
        return np.full((m, n_classes), 1.0 / n_classes)
    sq = (
        np.einsum("ij,ij->i", queries, queries)[:, None]
        + np.einsum("ij,ij->i", store_X, store_X)[None, :]
        - 2.0 * queries @ store_X.T
    )
    d = np.sqrt(np.maximum(sq, 0.0))
    kk = min(k, n)
    idx = np.argsort(d, axis=1, kind="stable")[:, :kk]
    topk_d = np.take_along_axis(d, idx, axis=1)
    topk_l = store_y[idx]
    counts = np.full(m, kk, dtype=np.int64)
    return knn_vote(topk_d, topk_l, counts, n_classes, eps)


def _argmax_tie(scores, u):
    best = scores.max()
    ties = np.flatnonzero(scores == best)
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[min(int(u * len(ties)), len(ties) - 1)])


def perceptron_pass(W, X, y, order, tie_u, lr):
    """One mistake-driven pass in the given order. Returns the update count."""
    d = X.shape[1]
    updates = 0
    for j, i in enumerate(order):
        x = X[i]
        scores = W[:, :d] @ x + W[:, d]
        pred = _argmax_tie(scores, tie_u[j])
        if pred != y[i]:
            W[y[i], :d] += lr * x
            W[y[i], d] += lr
            W[pred, :d] -= lr * x
            W[pred, d] -= lr
            updates += 1
    return updates


def softmax_pass(W, X, y, order, lr):
    d = X.shape[1]
    for i in order:
        x = X[i]
        z = W[:, :d] @ x + W[:, d]
        z -= z.max()
        p = np.exp(z)
        p /= p.sum()
        p[y[i]] -= 1.0
        W[:, :d] -= lr * np.outer(p, x)
        W[:, d] -= lr * p


def mapping_errors(true_names, guess_u):
    """Wrong-guess counts for the name-assignment game with feedback.

    ``true_names[t, j]`` is the class name of the j-th cluster visited in
    trial t; ``guess_u[t, j]`` picks the guess among names still unassigned.
    """
    trials, C = true_names.shape
    remaining = np.ones((trials, C), dtype=bool)
    errors = np.zeros(trials, dtype=np.int64)
    rows = np.arange(trials)
    for j in range(C):
        m = C - j
        guess_pos = np.minimum((guess_u[:, j] * m).astype(np.int64), m - 1)
        true = true_names[:, j]
        before = np.cumsum(remaining, axis=1) - 1
        true_pos = before[rows, true]
        errors += guess_pos != true_pos
        remaining[rows, true] = False
    return errors
