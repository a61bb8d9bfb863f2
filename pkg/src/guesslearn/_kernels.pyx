# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``guesslearn._fallback`` exactly."""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, exp

cnp.import_array()


cdef inline void _insert(double[:, ::1] topk_d, cnp.int64_t[:, ::1] topk_l,
                         cnp.int64_t[::1] counts, Py_ssize_t i, double d,
                         cnp.int64_t label, Py_ssize_t k) nogil:
    cdef Py_ssize_t n = counts[i]
    cdef Py_ssize_t pos
    if n == k:
        if not d < topk_d[i, k - 1]:
            return
        n = k - 1
    else:
        counts[i] = n + 1
    pos = n
    while pos > 0 and topk_d[i, pos - 1] > d:
        topk_d[i, pos] = topk_d[i, pos - 1]
        topk_l[i, pos] = topk_l[i, pos - 1]
        pos -= 1
    topk_d[i, pos] = d
    topk_l[i, pos] = label


def knn_topk_insert(double[:, ::1] pool_X, double[::1] x, cnp.int64_t label,
                    double[:, ::1] topk_d, cnp.int64_t[:, ::1] topk_l,
                    cnp.int64_t[::1] counts):
    cdef Py_ssize_t N = pool_X.shape[0], D = pool_X.shape[1], k = topk_d.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, t
    with nogil:
        for i in range(N):
            acc = 0.0
            for j in range(D):
                t = pool_X[i, j] - x[j]
                acc = acc + t * t
            _insert(topk_d, topk_l, counts, i, sqrt(acc), label, k)


def knn_vote(double[:, ::1] topk_d, cnp.int64_t[:, ::1] topk_l,
             cnp.int64_t[::1] counts, Py_ssize_t n_classes, double eps):
    cdef Py_ssize_t m = topk_d.shape[0], i, j, c
    cdef double total
    out = np.zeros((m, n_classes), dtype=np.float64)
    cdef double[:, ::1] probs = out
    with nogil:
        for i in range(m):
            if counts[i] == 0:
                for c in range(n_classes):
                    probs[i, c] = 1.0
                total = <double>n_classes
            else:
                for j in range(counts[i]):
                    probs[i, topk_l[i, j]] += 1.0 / (topk_d[i, j] + eps)
                total = 0.0
                for c in range(n_classes):
                    total = total + probs[i, c]
            for c in range(n_classes):
                probs[i, c] = probs[i, c] / total
    return out


def knn_query(double[:, ::1] store_X, cnp.int64_t[::1] store_y,
              double[:, ::1] queries, Py_ssize_t k, Py_ssize_t n_classes,
              double eps):
    cdef Py_ssize_t m = queries.shape[0], n = store_X.shape[0], D = queries.shape[1]
    cdef Py_ssize_t kk = k if k < n else n
    cdef Py_ssize_t i, s, j
    cdef double acc, t
    if n == 0:
        return np.full((m, n_classes), 1.0 / n_classes)
    topk_d_arr = np.full((m, kk), np.inf)
    topk_l_arr = np.zeros((m, kk), dtype=np.int64)
    counts_arr = np.zeros(m, dtype=np.int64)
    cdef double[:, ::1] topk_d = topk_d_arr
    cdef cnp.int64_t[:, ::1] topk_l = topk_l_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    with nogil:
        for i in range(m):
            for s in range(n):
                acc = 0.0
                for j in range(D):
                    t = queries[i, j] - store_X[s, j]
                    acc = acc + t * t
                _insert(topk_d, topk_l, counts, i, sqrt(acc), store_y[s], kk)
    return knn_vote(topk_d, topk_l, counts, n_classes, eps)


def perceptron_pass(double[:, ::1] W, double[:, ::1] X, cnp.int64_t[::1] y,
                    cnp.int64_t[::1] order, double[::1] tie_u, double lr):
    cdef Py_ssize_t C = W.shape[0], D = X.shape[1], n = order.shape[0]
    cdef Py_ssize_t j, i, c, f, pred, n_ties, pick, truth
    cdef double s, best
    cdef Py_ssize_t updates = 0
    scores_arr = np.empty(C)
    cdef double[::1] scores = scores_arr
    with nogil:
        for j in range(n):
            i = order[j]
            truth = y[i]
            best = -1e308
            for c in range(C):
                s = W[c, D]
                for f in range(D):
                    s = s + W[c, f] * X[i, f]
                scores[c] = s
                if s > best:
                    best = s
            n_ties = 0
            for c in range(C):
                if scores[c] == best:
                    n_ties += 1
            pick = <Py_ssize_t>(tie_u[j] * n_ties)
            if pick > n_ties - 1:
                pick = n_ties - 1
            pred = -1
            for c in range(C):
                if scores[c] == best:
                    if pick == 0:
                        pred = c
                        break
                    pick -= 1
            if pred != truth:
                for f in range(D):
                    W[truth, f] += lr * X[i, f]
                    W[pred, f] -= lr * X[i, f]
                W[truth, D] += lr
                W[pred, D] -= lr
                updates += 1
    return updates


def softmax_pass(double[:, ::1] W, double[:, ::1] X, cnp.int64_t[::1] y,
                 cnp.int64_t[::1] order, double lr):
    cdef Py_ssize_t C = W.shape[0], D = X.shape[1], n = order.shape[0]
    cdef Py_ssize_t j, i, c, f
    cdef double s, zmax, total, g
    p_arr = np.empty(C)
    cdef double[::1] p = p_arr
    with nogil:
        for j in range(n):
            i = order[j]
            zmax = -1e308
            for c in range(C):
                s = W[c, D]
                for f in range(D):
                    s = s + W[c, f] * X[i, f]
                p[c] = s
                if s > zmax:
                    zmax = s
            total = 0.0
            for c in range(C):
                p[c] = exp(p[c] - zmax)
                total = total + p[c]
            for c in range(C):
                g = p[c] / total
                if c == y[i]:
                    g = g - 1.0
                for f in range(D):
                    W[c, f] -= lr * g * X[i, f]
                W[c, D] -= lr * g
    return None


def mapping_errors(cnp.int64_t[:, ::1] true_names, double[:, ::1] guess_u):
    cdef Py_ssize_t trials = true_names.shape[0], C = true_names.shape[1]
    cdef Py_ssize_t t, j, c, m, guess_pos, true_pos, truth
    out = np.zeros(trials, dtype=np.int64)
    cdef cnp.int64_t[::1] errors = out
    rem_arr = np.empty(C, dtype=np.uint8)
    cdef unsigned char[::1] remaining = rem_arr
    with nogil:
        for t in range(trials):
            for c in range(C):
                remaining[c] = 1
            for j in range(C):
                m = C - j
                guess_pos = <Py_ssize_t>(guess_u[t, j] * m)
                if guess_pos > m - 1:
                    guess_pos = m - 1
                truth = true_names[t, j]
                true_pos = 0
                for c in range(truth):
                    true_pos += remaining[c]
                if guess_pos != true_pos:
                    errors[t] += 1
                remaining[truth] = 0
    return out
