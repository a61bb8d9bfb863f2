"""The guess-and-learn episode loop and its bookkeeping types.

An episode walks an unlabeled pool without replacement. At every step the
acquisition strategy picks an instance, the learner must predict its class,
the true label is revealed, and the learner is updated on the track's
schedule. The trajectory records the running error count.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

PROB_TOL = 1e-6


class ProtocolError(ValueError):
    """Raised for invalid pools, tracks, or learner/pool mismatches."""


@dataclass(frozen=True)
class Instance:
    id: int
    features: np.ndarray
    label: int


@dataclass
class Pool:
    """Feature matrix plus hidden labels; instance ids are row indices."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int
    name: str = "pool"

    def __post_init__(self) -> None:
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ProtocolError(f"features must be a 2-D array, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ProtocolError(
                f"{self.X.shape[0]} feature rows but {self.y.shape[0]} labels"
            )
        if self.n_classes < 1:
            raise ProtocolError("n_classes must be >= 1")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ProtocolError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def instance(self, i: int) -> Instance:
        return Instance(int(i), self.X[i], int(self.y[i]))

    def __iter__(self) -> Iterator[Instance]:
        for i in range(len(self)):
            yield self.instance(i)


def check_prob_vector(p: np.ndarray, n_classes: int | None = None, tol: float = PROB_TOL) -> None:
    p = np.asarray(p)
    if p.ndim != 1 or (n_classes is not None and p.shape[0] != n_classes):
        raise ProtocolError(f"probability vector has shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ProtocolError("probability vector has negative or non-finite entries")
    if abs(p.sum() - 1.0) > tol:
        raise ProtocolError(f"probability vector sums to {p.sum()!r}")


class Initialization(str, enum.Enum):
    SCRATCH = "scratch"
    PRETRAINED = "pretrained"


class UpdateMode(str, enum.Enum):
    ONLINE = "online"
    BATCH = "batch"


class ResetPolicy(str, enum.Enum):
    CARRY_FORWARD = "carry_forward"
    RESET_EACH_BATCH = "reset_each_batch"


@dataclass(frozen=True)
class Schedule:
    mode: UpdateMode = UpdateMode.ONLINE
    K: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", UpdateMode(self.mode))
        if self.mode is UpdateMode.ONLINE and self.K != 1:
            raise ProtocolError(f"online schedule requires K=1, got K={self.K}")
        if self.mode is UpdateMode.BATCH and self.K <= 1:
            raise ProtocolError(f"batch schedule requires K>1, got K={self.K}")

    @classmethod
    def online(cls) -> Schedule:
        return cls(UpdateMode.ONLINE, 1)

    @classmethod
    def batch(cls, K: int = 50) -> Schedule:
        return cls(UpdateMode.BATCH, K)


@dataclass(frozen=True)
class TrackConfig:
    initialization: Initialization = Initialization.SCRATCH
    schedule: Schedule = field(default_factory=Schedule.online)
    reset_policy: ResetPolicy = ResetPolicy.CARRY_FORWARD

    def __post_init__(self) -> None:
        object.__setattr__(self, "initialization", Initialization(self.initialization))
        object.__setattr__(self, "reset_policy", ResetPolicy(self.reset_policy))
        if (
            self.reset_policy is ResetPolicy.RESET_EACH_BATCH
            and self.schedule.mode is not UpdateMode.BATCH
        ):
            raise ProtocolError("reset_each_batch is only valid with a batch schedule")

    @property
    def track_id(self) -> str:
        """Short label such as ``SO``, ``SB50`` or ``PB50-reset``."""
        init = "S" if self.initialization is Initialization.SCRATCH else "P"
        if self.schedule.mode is UpdateMode.ONLINE:
            return init + "O"
        tag = f"{init}B{self.schedule.K}"
        if self.reset_policy is ResetPolicy.RESET_EACH_BATCH:
            tag += "-reset"
        return tag

    @classmethod
    def make(
        cls,
        initialization: str = "scratch",
        mode: str = "online",
        K: int | None = None,
        reset_policy: str = "carry_forward",
    ) -> TrackConfig:
        mode = UpdateMode(mode)
        if K is None:
            K = 1 if mode is UpdateMode.ONLINE else 50
        return cls(Initialization(initialization), Schedule(mode, K), ResetPolicy(reset_policy))


@dataclass(frozen=True)
class StepRecord:
    step: int
    instance_id: int
    predicted: int
    truth: int
    correct: bool
    cumulative_error: int
    elapsed_seconds: float


@dataclass
class Trajectory:
    records: list[StepRecord]
    seed: int
    track: TrackConfig
    strategy: str
    learner: str
    pool_size: int = 0
    batch_fits: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def errors(self) -> np.ndarray:
        """E_t for t = 1..len(records)."""
        return np.fromiter((r.cumulative_error for r in self.records), dtype=np.int64,
                           count=len(self.records))

    @property
    def final_error(self) -> int:
        return self.records[-1].cumulative_error if self.records else 0

    @property
    def complete(self) -> bool:
        return len(self.records) == self.pool_size


def cumulative_error(trajectory: Trajectory, t: int) -> int:
    """Number of wrong predictions among the first ``t`` steps."""
    if not 1 <= t <= len(trajectory.records):
        raise IndexError(f"t={t} outside 1..{len(trajectory.records)}")
    return trajectory.records[t - 1].cumulative_error


def random_baseline_expectation(N: int, C: int) -> float:
    """Expected error count of uniform guessing over C balanced classes."""
    if C < 2:
        raise ValueError(f"need at least 2 classes, got C={C}")
    if N < 0:
        raise ValueError(f"N must be non-negative, got {N}")
    return N * (1.0 - 1.0 / C)


def perceptron_mistake_bound(R: float, gamma: float) -> float:
    """Novikoff's cap R^2 / gamma^2 on Perceptron mistakes for separable data."""
    if not (R > 0 and gamma > 0):
        raise ValueError(f"R and gamma must be positive, got R={R}, gamma={gamma}")
    return R * R / (gamma * gamma)


@dataclass
class EpisodeStreams:
    """Independent RNG streams derived from one episode seed."""

    acquisition: np.random.Generator
    prediction: np.random.Generator
    learner: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> EpisodeStreams:
        acq, pred, learn = np.random.SeedSequence(seed).spawn(3)
        return cls(np.random.default_rng(acq), np.random.default_rng(pred),
                   np.random.default_rng(learn))


def argmax_tie(p: np.ndarray, rng: np.random.Generator) -> int:
    """Index of the largest entry; exact ties are broken uniformly at random."""
    best = p.max()
    ties = np.flatnonzero(p == best)
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[rng.integers(len(ties))])


def run_episode(
    pool: Pool,
    learner,
    strategy,
    track: TrackConfig,
    seed: int,
    *,
    epochs: int = 1,
    max_steps: int | None = None,
    clock: Callable[[], float] | None = time.perf_counter,
) -> Trajectory:
    """Run one guess-and-learn episode.

    ``learner`` is either a freshly built learner or a factory called as
    ``factory(n_features, n_classes, rng)`` with the episode's learner stream.
    ``max_steps`` stops the episode early (the first steps are identical to
    a full run); ``clock=None`` records zero elapsed time everywhere.
    """
    from guesslearn.acquisition import Strategy, select
    from guesslearn.learners import Learner

    N = len(pool)
    if N == 0:
        raise ProtocolError("pool is empty")
    strategy = Strategy(strategy)
    streams = EpisodeStreams.from_seed(seed)
    if not isinstance(learner, Learner):
        learner = learner(pool.dim, pool.n_classes, streams.learner)
    if learner.n_features != pool.dim:
        raise ProtocolError(
            f"learner expects {learner.n_features} features, pool has {pool.dim}"
        )
    if learner.n_classes != pool.n_classes:
        raise ProtocolError(
            f"learner has {learner.n_classes} classes, pool has {pool.n_classes}"
        )
    steps = N if max_steps is None else min(N, int(max_steps))
    if steps < 1:
        raise ProtocolError("max_steps must be >= 1")

    online = track.schedule.mode is UpdateMode.ONLINE
    K = track.schedule.K
    reset = track.reset_policy is ResetPolicy.RESET_EACH_BATCH

    learner.bind_pool(pool.X, score_all=strategy is not Strategy.RANDOM)
    unlabeled = np.arange(N, dtype=np.int64)
    history: list[int] = []
    pending = 0
    errors = 0
    fits = 0
    records: list[StepRecord] = []
    start = clock() if clock is not None else 0.0

    for t in range(1, steps + 1):
        i = select(strategy, unlabeled, learner, streams.acquisition)
        p = learner.pool_proba(np.array([i]))[0]
        pred = argmax_tie(p, streams.prediction)
        truth = int(pool.y[i])
        unlabeled = unlabeled[unlabeled != i]
        history.append(i)

        if online:
            learner.observe(pool.X[i], truth, predicted=pred)
        else:
            pending += 1
            if pending == K or len(unlabeled) == 0:
                if reset or learner.retrains_on_history:
                    idx = np.asarray(history)
                else:
                    idx = np.asarray(history[-pending:])
                learner.fit_batch(pool.X[idx], pool.y[idx], epochs=epochs, reset=reset,
                                  rng=streams.learner)
                fits += 1
                pending = 0

        correct = pred == truth
        errors += not correct
        elapsed = (clock() - start) if clock is not None else 0.0
        records.append(StepRecord(t, int(i), pred, truth, bool(correct), errors, elapsed))

    return Trajectory(
        records=records,
        seed=seed,
        track=track,
        strategy=strategy.value,
        learner=learner.name,
        pool_size=N,
        batch_fits=fits,
    )


def expected_batch_fits(N: int, K: int) -> int:
    return math.ceil(N / K)


def recount_errors(records: Sequence[StepRecord]) -> list[int]:
    """Rebuild E_t from the per-step correctness flags alone."""
    out, e = [], 0
    for r in records:
        e += 0 if r.correct else 1
        out.append(e)
    return out
