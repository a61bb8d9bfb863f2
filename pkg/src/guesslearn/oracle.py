"""Heuristic oracle floor: cluster, query one medoid per cluster, name clusters.

Naming C clusters with C class names when every wrong guess reveals the
right name costs ``C - H_C`` errors in expectation (``H_C`` the C-th harmonic
number). Residual boundary and label-noise errors widen that to a band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from guesslearn import kernels
from guesslearn.protocol import Pool


def harmonic(C: int) -> float:
    return math.fsum(1.0 / j for j in range(1, C + 1))


def expected_mapping_errors(C: int) -> float:
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    return C - harmonic(C)


@dataclass(frozen=True)
class MappingSimulation:
    mean: float
    stderr: float
    trials: int


def simulate_mapping_with_feedback(C: int, trials: int, seed: int = 0) -> MappingSimulation:
    """Monte Carlo estimate of mapping errors.

    Each trial visits the C clusters in random order and guesses uniformly
    among names not yet assigned; a wrong guess counts one error, then the
    true name is revealed and retired. The visiting order does not change
    the expectation.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if C < 1:
        raise ValueError("C must be >= 1")
    rng = np.random.default_rng(seed)
    names = rng.permuted(np.tile(np.arange(C, dtype=np.int64), (trials, 1)), axis=1)
    u = rng.random((trials, C))
    errs = kernels.mapping_errors(np.ascontiguousarray(names), u).astype(np.float64)
    stderr = float(errs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MappingSimulation(float(errs.mean()), stderr, trials)


# -- clustering ---------------------------------------------------------------

@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    medoids: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    reseeds: int = 0


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _init_centroids(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, the rest drawn by squared distance."""
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    closest = _sq_dists(X, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dists(X, X[idx][None, :])[:, 0])
    return np.array(centers, dtype=np.float64)


def medoid_indices(X: np.ndarray, assignments: np.ndarray, k: int, chunk: int = 2048) -> np.ndarray:
    """Per cluster, the member with the smallest summed Euclidean distance to the others."""
    out = np.full(k, -1, dtype=np.int64)
    for c in range(k):
        members = np.flatnonzero(assignments == c)
        if len(members) == 0:
            continue
        M = X[members]
        totals = np.empty(len(members))
        for s in range(0, len(members), chunk):
            totals[s:s + chunk] = np.sqrt(_sq_dists(M[s:s + chunk], M)).sum(1)
        out[c] = members[int(np.argmin(totals))]
    return out


def kmeans(X: np.ndarray, k: int, iters: int = 100, seed: int = 0) -> ClusterModel:
    """Lloyd iterations from k-means++ seeds.

    A cluster that empties is re-seeded with the point farthest from its
    current centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty pool")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    rng = np.random.default_rng(seed)
    centroids = _init_centroids(X, k, rng)
    history: list[float] = []
    reseeds = 0
    assign = np.full(n, -1)
    for _ in range(iters):
        d = _sq_dists(X, centroids)
        new_assign = d.argmin(1)
        history.append(float(d[np.arange(n), new_assign].sum()))
        counts = np.bincount(new_assign, minlength=k)
        while np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0])
            own = d[np.arange(n), new_assign]
            far = int(np.argmax(np.where(counts[new_assign] > 1, own, -1.0)))
            new_assign[far] = empty
            centroids[empty] = X[far]
            counts = np.bincount(new_assign, minlength=k)
            reseeds += 1
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            centroids[c] = X[assign == c].mean(0)
    return ClusterModel(k, centroids, assign, medoid_indices(X, assign, k), history, reseeds)


@dataclass
class ClusterOracleResult:
    errors: int
    purity: list[float]
    cluster_labels: list[int]
    model: ClusterModel

    @property
    def mean_purity(self) -> float:
        sizes = np.bincount(self.model.assignments, minlength=self.model.k)
        return float(np.dot(self.purity, sizes) / sizes.sum())


def cluster_first_oracle(pool: Pool, C: int | None = None, iters: int = 100,
                         seed: int = 0) -> ClusterOracleResult:
    """Cluster the pool, label each cluster by its medoid, count mismatches.

    Purity is the share of a cluster's members carrying its majority label.
    """
    if len(pool) == 0:
        raise ValueError("pool is empty")
    k = pool.n_classes if C is None else C
    if k < 1:
        raise ValueError("C must be >= 1")
    model = kmeans(pool.X, k, iters=iters, seed=seed)
    labels = pool.y[model.medoids]
    predicted = labels[model.assignments]
    purity = []
    for c in range(k):
        members = pool.y[model.assignments == c]
        purity.append(float(np.bincount(members).max() / len(members)))
    return ClusterOracleResult(int((predicted != pool.y).sum()), purity,
                               [int(v) for v in labels], model)


# -- band ---------------------------------------------------------------------

BandPolicy = Callable[[float, tuple[int, int], tuple[int, int]], tuple[int, int]]


def overlap_policy(e_map: float, boundary: tuple[int, int], noise: tuple[int, int]) -> tuple[int, int]:
    """Compose the mapping expectation with overlapping residual ranges.

    The low end is the whole part of the mapping expectation (residual errors
    may coincide with mapping errors). The high end rounds the mapping cost
    up and adds the larger residual maximum, less the smaller residual
    minimum that the two residual sources are assumed to share.
    """
    low = math.floor(e_map)
    extra = max(boundary[1], noise[1]) - min(boundary[0], noise[0])
    return low, math.ceil(e_map) + extra


@dataclass(frozen=True)
class OracleBand:
    C: int
    e_map: float
    boundary_range: tuple[int, int]
    noise_range: tuple[int, int]
    band: tuple[int, int]
    policy: str = "overlap"


def _check_range(r, what: str) -> tuple[int, int]:
    lo, hi = (int(v) for v in r)
    if lo < 0 or lo > hi:
        raise ValueError(f"{what} range must satisfy 0 <= low <= high, got {r}")
    return lo, hi


def oracle_band(C: int, boundary_range=(2, 4), noise_range=(4, 6),
                policy: BandPolicy = overlap_policy) -> OracleBand:
    """Reference band of plausible minimal errors.

    With a single class nothing can be misnamed, confused, or mislabeled, so
    the band collapses to ``[0, 0]`` regardless of the residual inputs.
    """
    b = _check_range(boundary_range, "boundary")
    nz = _check_range(noise_range, "noise")
    e_map = expected_mapping_errors(C)
    band = (0, 0) if C == 1 else policy(e_map, b, nz)
    name = getattr(policy, "__name__", "custom").removesuffix("_policy")
    return OracleBand(C, e_map, b, nz, (int(band[0]), int(band[1])), name)
