"""Instance selection: random plus four probability-scored strategies."""
from __future__ import annotations

import enum

import numpy as np


class Strategy(str, enum.Enum):
    RANDOM = "random"
    CONFIDENCE = "confidence"
    LEAST_CONFIDENCE = "least_confidence"
    MARGIN = "margin"
    ENTROPY = "entropy"


STRATEGIES = tuple(s.value for s in Strategy)


def score_confidence(p) -> float:
    return float(np.max(p))


def score_least_confidence(p) -> float:
    # Same score as confidence; the strategy takes the argmin instead.
    return float(np.max(p))


def score_margin(p) -> float:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] < 2:
        raise ValueError("margin needs at least two classes")
    top2 = np.partition(p, -2)[-2:]
    return float(top2[1] - top2[0])


def score_entropy(p) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


# Vectorized scorers over an (m, C) probability matrix, with the direction the
# strategy optimizes: +1 selects the largest score, -1 the smallest.
def _max_rows(P):
    return P.max(axis=1)


def _margin_rows(P):
    if P.shape[1] < 2:
        raise ValueError("margin needs at least two classes")
    top2 = np.partition(P, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def _entropy_rows(P):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(np.where(P > 0, P, 1.0)), 0.0)
    return -terms.sum(axis=1)


_SCORERS = {
    Strategy.CONFIDENCE: (_max_rows, 1),
    Strategy.LEAST_CONFIDENCE: (_max_rows, -1),
    Strategy.MARGIN: (_margin_rows, -1),
    Strategy.ENTROPY: (_entropy_rows, 1),
}


def score_rows(strategy, P: np.ndarray) -> np.ndarray:
    fn, _ = _SCORERS[Strategy(strategy)]
    return fn(np.asarray(P, dtype=float))


def select_from_probs(strategy, ids: np.ndarray, P: np.ndarray, rng: np.random.Generator) -> int:
    """Pick the id whose row of ``P`` optimizes the strategy's score.

    Exact score ties are resolved uniformly at random among the tied ids,
    taken in ascending id order.
    """
    strategy = Strategy(strategy)
    ids = np.asarray(ids)
    if len(ids) == 0:
        raise ValueError("no unlabeled instances to select from")
    if strategy is Strategy.RANDOM:
        return int(ids[rng.integers(len(ids))])
    fn, direction = _SCORERS[strategy]
    scores = fn(np.asarray(P, dtype=float))
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite acquisition score")
    best = scores.max() if direction > 0 else scores.min()
    tied = ids[scores == best]
    if len(tied) == 1:
        return int(tied[0])
    tied = np.sort(tied)
    return int(tied[rng.integers(len(tied))])


def select(strategy, unlabeled: np.ndarray, learner, rng: np.random.Generator) -> int:
    """Choose the next instance from ``unlabeled`` using a pool-bound learner."""
    strategy = Strategy(strategy)
    unlabeled = np.asarray(unlabeled)
    if len(unlabeled) == 0:
        raise ValueError("no unlabeled instances to select from")
    if len(unlabeled) == 1:
        return int(unlabeled[0])
    if strategy is Strategy.RANDOM:
        return int(unlabeled[rng.integers(len(unlabeled))])
    return select_from_probs(strategy, unlabeled, learner.pool_proba(unlabeled), rng)
