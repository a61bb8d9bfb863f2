"""Seed aggregation, CSV/JSON emission and cost-performance tables."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from guesslearn.protocol import Trajectory

TRAJECTORY_HEADER = (
    "step", "instance_id", "predicted", "truth", "correct", "cumulative_error", "elapsed_seconds",
)
CURVE_HEADER = ("step", "mean_error", "stderr", "n_seeds")


def fmt(x: float) -> str:
    """Shortest round-trip decimal for a float."""
    return repr(float(x))


@dataclass
class AggregateCurve:
    mean: np.ndarray
    stderr: np.ndarray
    n_seeds: int
    learner: str = ""
    strategy: str = ""
    track: str = ""
    seeds: tuple = ()

    @property
    def n(self) -> int:
        return len(self.mean)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, self.n + 1)


def _config_key(t: Trajectory) -> tuple:
    return (t.learner, t.strategy, t.track)


def aggregate_across_seeds(trajectories: Sequence[Trajectory], cutoff: int | None = None) -> AggregateCurve:
    """Per-step mean and standard error of E_t across seeds, truncated at ``cutoff``.

    Standard error is the sample (n-1) standard deviation over seeds divided
    by sqrt(seed count), and zero for a single seed.
    """
    if not trajectories:
        raise ValueError("no trajectories to aggregate")
    keys = {_config_key(t) for t in trajectories}
    if len(keys) != 1:
        raise ValueError(f"trajectories mix configurations: {sorted(map(str, keys))}")
    shortest = min(len(t) for t in trajectories)
    n = shortest if cutoff is None else cutoff
    if not 1 <= n <= shortest:
        raise ValueError(f"cutoff {n} exceeds shortest trajectory length {shortest}")
    # Sort by seed so the reduction order, and thus every float, is permutation-invariant.
    ordered = sorted(trajectories, key=lambda t: t.seed)
    E = np.stack([t.errors[:n] for t in ordered]).astype(np.float64)
    s = len(ordered)
    mean = E.mean(axis=0)
    stderr = E.std(axis=0, ddof=1) / math.sqrt(s) if s > 1 else np.zeros(n)
    t0 = ordered[0]
    return AggregateCurve(mean, stderr, s, t0.learner, t0.strategy, t0.track.track_id,
                          tuple(t.seed for t in ordered))


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in trajectory.records:
            w.writerow((r.step, r.instance_id, r.predicted, r.truth, int(r.correct),
                        r.cumulative_error, fmt(r.elapsed_seconds)))


def read_trajectory_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [
        {
            "step": int(r["step"]),
            "instance_id": int(r["instance_id"]),
            "predicted": int(r["predicted"]),
            "truth": int(r["truth"]),
            "correct": bool(int(r["correct"])),
            "cumulative_error": int(r["cumulative_error"]),
            "elapsed_seconds": float(r["elapsed_seconds"]),
        }
        for r in rows
    ]


def write_curve_csv(curve: AggregateCurve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for t, m, s in zip(curve.steps, curve.mean, curve.stderr):
            w.writerow((int(t), fmt(m), fmt(s), curve.n_seeds))


def read_curve_csv(path) -> AggregateCurve:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return AggregateCurve(
        np.array([float(r["mean_error"]) for r in rows]),
        np.array([float(r["stderr"]) for r in rows]),
        int(rows[0]["n_seeds"]) if rows else 0,
    )


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class RunGroup:
    """One (learner, strategy, track) cell: its curve plus per-seed timings at the cutoff."""

    curve: AggregateCurve
    wallclock_seconds: Sequence[float] | None


@dataclass(frozen=True)
class CostPerformancePoint:
    learner: str
    strategy: str
    track: str
    n: int
    mean_final_error: float
    mean_wallclock_seconds: float


def cost_performance_table(groups: Sequence[RunGroup], cutoff: int) -> list[CostPerformancePoint]:
    """One point per (learner, strategy, track), sorted by track then mean final error."""
    points: dict[tuple, CostPerformancePoint] = {}
    for g in groups:
        c = g.curve
        if not g.wallclock_seconds:
            raise ValueError(f"missing timing data for {c.learner}/{c.strategy}/{c.track}")
        if cutoff > c.n:
            raise ValueError(f"cutoff {cutoff} exceeds curve length {c.n}")
        key = (c.learner, c.strategy, c.track)
        if key in points:
            raise ValueError(f"duplicate cell {key}")
        points[key] = CostPerformancePoint(
            c.learner, c.strategy, c.track, cutoff,
            float(c.mean[cutoff - 1]), float(np.mean(g.wallclock_seconds)),
        )
    return sorted(points.values(),
                  key=lambda p: (p.track, p.mean_final_error, p.mean_wallclock_seconds,
                                 p.learner, p.strategy))


def summary_record(curve: AggregateCurve, wallclock: Sequence[float] | None) -> dict:
    return {
        "learner": curve.learner,
        "strategy": curve.strategy,
        "track": curve.track,
        "seed_list": list(curve.seeds),
        "n": curve.n,
        "mean_final_error": float(curve.mean[-1]),
        "stderr_final_error": float(curve.stderr[-1]),
        "mean_wallclock_seconds": float(np.mean(wallclock)) if wallclock else None,
    }
