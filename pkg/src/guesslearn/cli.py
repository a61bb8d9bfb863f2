"""Command-line entry point: ``guesslearn {run,oracle,ablation,fixtures}``.

Experiment configs are flat YAML mappings with dotted keys, for example::

    dataset.name: mnist
    dataset.dir: data/mnist
    learner.name: [perceptron, knn]
    strategy: [random, entropy]
    track.mode: batch
    track.k: 50
    seeds: [0, 1, 2, 3, 4]
    cutoff: 300
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from guesslearn import data as gl_data
from guesslearn.acquisition import STRATEGIES
from guesslearn.learners import LEARNERS, learner_factory
from guesslearn.oracle import oracle_band, simulate_mapping_with_feedback
from guesslearn.protocol import Pool, ProtocolError, TrackConfig, UpdateMode, run_episode
from guesslearn.reporting import (
    RunGroup,
    aggregate_across_seeds,
    cost_performance_table,
    summary_record,
    write_csv,
    write_curve_csv,
    write_json,
    write_trajectory_csv,
)

log = logging.getLogger("guesslearn")

LEARNER_KEYS = ("k", "hidden", "lr", "eps", "init_scale")
KNOWN_KEYS = {
    "dataset.name", "dataset.dir", "dataset.images", "dataset.labels", "dataset.csv",
    "dataset.path", "dataset.hash_dim", "dataset.kind", "dataset.n", "dataset.classes",
    "dataset.dim", "dataset.seed", "dataset.R", "dataset.gamma", "dataset.spread",
    "dataset.separation",
    "learner.name", "learner.epochs_per_batch", *(f"learner.{k}" for k in LEARNER_KEYS),
    "strategy", "track.init", "track.mode", "track.k", "track.reset_policy",
    "seeds", "cutoff", "steps", "output", "timing",
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentConfig:
    dataset: gl_data.DatasetSpec
    learners: list[str]
    strategies: list[str]
    track: TrackConfig
    learner_params: dict = field(default_factory=dict)
    epochs_per_batch: int = 1
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    cutoff: int = 300
    steps: int | None = None
    output: str = "results"
    timing: str = "wall"

    @classmethod
    def from_mapping(cls, raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
        problems: list[str] = []
        unknown = sorted(set(raw) - KNOWN_KEYS)
        problems += [f"{k}: unknown key" for k in unknown]

        name = raw.get("dataset.name")
        if name not in ("mnist", "agnews", "embeddings", "synthetic"):
            problems.append(f"dataset.name: expected mnist|agnews|embeddings|synthetic, got {name!r}")
        paths, params = {}, {}
        for key, value in raw.items():
            if not key.startswith("dataset.") or key == "dataset.name":
                continue
            sub = key.split(".", 1)[1]
            if sub in ("dir", "images", "labels", "csv", "path"):
                p = Path(value)
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                paths[sub] = str(p)
            else:
                params[sub] = value
        if name == "embeddings" and "path" not in paths:
            problems.append("dataset.path: required for embeddings")
        if name == "agnews" and "csv" not in paths:
            problems.append("dataset.csv: required for agnews")

        learners = [str(v) for v in _as_list(raw.get("learner.name", []))]
        if not learners:
            problems.append("learner.name: required")
        problems += [f"learner.name: unknown learner {n!r}" for n in learners if n not in LEARNERS]
        strategies = [str(v) for v in _as_list(raw.get("strategy", "random"))]
        problems += [f"strategy: unknown strategy {s!r}" for s in strategies if s not in STRATEGIES]
        if len(set(strategies)) != len(strategies):
            problems.append("strategy: duplicates")

        track = None
        try:
            mode = raw.get("track.mode", "online")
            K = raw.get("track.k")
            track = TrackConfig.make(
                raw.get("track.init", "scratch"), mode,
                None if K is None else int(K),
                raw.get("track.reset_policy", "carry_forward"),
            )
        except (ValueError, ProtocolError) as e:
            problems.append(f"track: {e}")

        if track is not None and track.initialization.value == "pretrained" and name != "embeddings":
            problems.append("track.init: pretrained tracks read frozen features from dataset.name: embeddings")

        seeds = _as_list(raw.get("seeds", [0, 1, 2, 3, 4]))
        if not seeds or not all(isinstance(s, int) for s in seeds):
            problems.append("seeds: must be a nonempty list of integers")
        elif len(set(seeds)) != len(seeds):
            problems.append("seeds: must be distinct")
        cutoff = raw.get("cutoff", 300)
        if not isinstance(cutoff, int) or cutoff < 1:
            problems.append("cutoff: must be a positive integer")
        steps = raw.get("steps", "full")
        if steps == "full":
            steps = None
        elif not isinstance(steps, int) or steps < 1:
            problems.append("steps: must be 'full' or a positive integer")
        elif isinstance(cutoff, int) and steps < cutoff:
            problems.append(f"steps: {steps} is shorter than cutoff {cutoff}")
        timing = raw.get("timing", "wall")
        if isinstance(timing, bool):  # YAML reads a bare off/on as a boolean
            timing = "wall" if timing else "off"
        if timing not in ("wall", "off"):
            problems.append("timing: expected wall|off")
        epochs = raw.get("learner.epochs_per_batch", 1)
        if not isinstance(epochs, int) or epochs < 1:
            problems.append("learner.epochs_per_batch: must be a positive integer")
        if problems:
            raise ConfigError(problems)
        return cls(
            dataset=gl_data.DatasetSpec(name, paths, params),
            learners=learners,
            strategies=strategies,
            track=track,
            learner_params={k: raw[f"learner.{k}"] for k in LEARNER_KEYS if f"learner.{k}" in raw},
            epochs_per_batch=epochs,
            seeds=list(seeds),
            cutoff=cutoff,
            steps=steps,
            output=str(raw.get("output", "results")),
            timing=timing,
        )

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        raw = yaml.safe_load(path.read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError(["<root>: expected a mapping of dotted keys"])
        return cls.from_mapping(raw, base_dir=path.parent)

    def canonical(self) -> dict:
        """Everything that determines results (not where they are written)."""
        t = self.track
        return {
            "dataset": {"name": self.dataset.name, "paths": self.dataset.paths,
                        "params": self.dataset.params},
            "learners": self.learners,
            "learner_params": self.learner_params,
            "epochs_per_batch": self.epochs_per_batch,
            "strategies": self.strategies,
            "track": {"init": t.initialization.value, "mode": t.schedule.mode.value,
                      "k": t.schedule.K, "reset_policy": t.reset_policy.value},
            "seeds": self.seeds,
            "cutoff": self.cutoff,
            "steps": self.steps,
            "timing": self.timing,
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


# -- grid execution -------------------------------------------------------------

_WORKER_POOL: Pool | None = None


def _init_worker(pool: Pool) -> None:
    global _WORKER_POOL
    _WORKER_POOL = pool


def _episode_job(args):
    learner, params, strategy, track, seed, epochs, steps, timing = args
    try:
        traj = run_episode(
            _WORKER_POOL, learner_factory(learner, **params), strategy, track, seed,
            epochs=epochs, max_steps=steps, clock=None if timing == "off" else time.perf_counter,
        )
        return traj, None
    except Exception as e:  # reported in the manifest; the grid keeps going
        return None, f"{type(e).__name__}: {e}"


def run_grid(cfg: ExperimentConfig, pool: Pool, out_dir: Path, parallel: int = 1) -> dict:
    """Run every (learner, strategy, seed) episode and write all reports into ``out_dir``."""
    traj_dir = out_dir / "trajectories"
    agg_dir = out_dir / "aggregates"
    traj_dir.mkdir(parents=True, exist_ok=True)
    agg_dir.mkdir(parents=True, exist_ok=True)
    track_id = cfg.track.track_id
    jobs = [
        (learner, cfg.learner_params, strategy, cfg.track, seed, cfg.epochs_per_batch,
         cfg.steps, cfg.timing)
        for learner in cfg.learners
        for strategy in cfg.strategies
        for seed in cfg.seeds
    ]
    if parallel > 1:
        with ProcessPoolExecutor(parallel, initializer=_init_worker, initargs=(pool,)) as ex:
            results = list(ex.map(_episode_job, jobs))
    else:
        _init_worker(pool)
        results = [_episode_job(j) for j in jobs]

    failures = []
    cells: dict[tuple, list] = {}
    for job, (traj, err) in zip(jobs, results):
        learner, _, strategy, _, seed = job[:5]
        name = f"{learner}_{strategy}_{track_id}_seed{seed}.csv"
        if err is not None:
            log.error("episode %s failed: %s", name, err)
            failures.append({"episode": name, "error": err})
            continue
        write_trajectory_csv(traj, traj_dir / name)
        cells.setdefault((learner, strategy), []).append(traj)

    summaries, groups = [], []
    n_cut = cfg.cutoff
    for (learner, strategy), trajs in cells.items():
        n = min(n_cut, min(len(t) for t in trajs))
        curve = aggregate_across_seeds(trajs, n)
        write_curve_csv(curve, agg_dir / f"{learner}_{strategy}_{track_id}.csv")
        wall = None if cfg.timing == "off" else [t.records[n - 1].elapsed_seconds for t in trajs]
        summaries.append(summary_record(curve, wall))
        if wall:
            groups.append(RunGroup(curve, wall))
    write_json(out_dir / "summary.json", summaries)
    if groups:
        table = cost_performance_table(groups, min(g.curve.n for g in groups))
        write_csv(out_dir / "cost_performance.csv",
                  ("learner", "strategy", "track", "n", "mean_final_error", "mean_wallclock_seconds"),
                  [(p.learner, p.strategy, p.track, p.n, p.mean_final_error,
                    p.mean_wallclock_seconds) for p in table])
    manifest = {
        "config": cfg.canonical(),
        "config_hash": cfg.content_hash(),
        "episodes": len(jobs),
        "completed": len(jobs) - len(failures),
        "failures": failures,
        "partial": bool(failures),
    }
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def _load_pool(cfg: ExperimentConfig) -> Pool:
    try:
        pool = cfg.dataset.load()
    except FileNotFoundError as e:
        raise SystemExit(f"error: missing data file: {e}") from None
    return pool


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=[int(s) for s in args.seeds.split(",")])
    if getattr(args, "cutoff", None):
        cfg = replace(cfg, cutoff=args.cutoff)
    if getattr(args, "out", None):
        cfg = replace(cfg, output=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.load(args.config), args)
    pool = _load_pool(cfg)
    out_dir = Path(cfg.output) / cfg.content_hash()
    manifest = run_grid(cfg, pool, out_dir, args.parallel)
    print(json.dumps({"output": str(out_dir), "completed": manifest["completed"],
                      "episodes": manifest["episodes"]}))
    return 1 if manifest["failures"] else 0


def cmd_ablation(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.load(args.config), args)
    if cfg.track.schedule.mode is not UpdateMode.BATCH:
        raise SystemExit("error: ablation needs a batch-mode config (track.mode: batch)")
    ks = [int(k) for k in args.k.split(",")]
    if any(k <= 1 for k in ks):
        raise SystemExit("error: K=1 is the online track; use track.mode: online instead")
    policies = [cfg.track.reset_policy.value]
    if args.reset_toggle:
        policies = ["carry_forward", "reset_each_batch"]
    pool = _load_pool(cfg)
    tag = hashlib.sha256(json.dumps([cfg.canonical(), ks, policies], sort_keys=True).encode())
    root = Path(cfg.output) / f"ablation-{tag.hexdigest()[:12]}"
    rows, failed = [], False
    for K in ks:
        for policy in policies:
            track = TrackConfig.make(cfg.track.initialization.value, "batch", K, policy)
            sub = replace(cfg, track=track)
            manifest = run_grid(sub, pool, root / track.track_id, args.parallel)
            failed |= bool(manifest["failures"])
            for rec in json.loads((root / track.track_id / "summary.json").read_text()):
                rows.append((K, policy, rec["learner"], rec["strategy"], rec["n"],
                             rec["mean_final_error"], rec["stderr_final_error"]))
    write_csv(root / "comparison.csv",
              ("K", "reset_policy", "learner", "strategy", "n", "mean_final_error",
               "stderr_final_error"), rows)
    print(json.dumps({"output": str(root), "rows": len(rows)}))
    return 1 if failed else 0


def oracle_report(C: int = 10, boundary=(2, 4), noise=(4, 6), trials: int = 100_000,
                  seed: int = 0) -> dict:
    band = oracle_band(C, boundary, noise)
    sim = simulate_mapping_with_feedback(C, trials, seed)
    return {
        "C": C,
        "e_map": band.e_map,
        "mc_mean": sim.mean,
        "mc_stderr": sim.stderr,
        "trials": trials,
        "seed": seed,
        "boundary_range": list(band.boundary_range),
        "noise_range": list(band.noise_range),
        "band": list(band.band),
        "band_policy": band.policy,
        "band_note": "heuristic composition of overlapping residuals; not a formal bound",
    }


def cmd_oracle(args) -> int:
    try:
        report = oracle_report(args.classes, tuple(args.boundary), tuple(args.noise),
                               args.trials, args.seed)
    except ValueError as e:
        raise SystemExit(f"error: {e}") from None
    print(json.dumps(report, indent=2))
    return 0


# -- fixtures -------------------------------------------------------------------

def _digit_like_images(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    protos = (rng.random((10, 28, 28)) > 0.8) * 255.0
    y = rng.permutation(np.arange(n) % 10)
    noise = rng.normal(0, 40, (n, 28, 28))
    imgs = np.clip(protos[y] + noise, 0, 255).astype(np.uint8)
    return imgs, y


_AG_WORDS = (
    ("election", "minister", "war", "talks", "un", "peace"),
    ("match", "season", "coach", "goal", "league", "win"),
    ("shares", "profit", "market", "bank", "deal", "oil"),
    ("software", "internet", "space", "chip", "nasa", "web"),
)


def write_fixtures(out: Path, n: int = 200, seed: int = 0) -> dict:
    """Emit small synthetic datasets in every supported on-disk format."""
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    imgs, y = _digit_like_images(n, rng)
    img_b, lab_b = gl_data.encode_mnist_idx(imgs, y)
    (out / "t10k-images-idx3-ubyte").write_bytes(img_b)
    (out / "t10k-labels-idx1-ubyte").write_bytes(lab_b)

    rows = []
    for i in range(n):
        c = i % 4
        words = rng.choice(_AG_WORDS[c], size=6).tolist() + rng.choice(
            [w for ws in _AG_WORDS for w in ws], size=2).tolist()
        rows.append(f'{c + 1},"{" ".join(words[:3])}, headline","{" ".join(words[3:])}"')
    (out / "agnews_test.csv").write_text("\n".join(rows) + "\n")

    blobs = gl_data.generate_blobs(n, 4, 32, seed)
    gl_data.write_embeddings(out / "embeddings.glemb", blobs.X, blobs.y, 4)
    margin = gl_data.generate_margin_dataset(n, 10.0, 1.0, seed)
    gl_data.write_embeddings(out / "margin.glemb", margin.X, margin.y, 2)
    return {"dir": str(out), "n": n, "files": sorted(p.name for p in out.iterdir())}


def cmd_fixtures(args) -> int:
    print(json.dumps(write_fixtures(Path(args.out), args.n, args.seed)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guesslearn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def grid_flags(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", help="output root (overrides config 'output')")
        p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")
        p.add_argument("--cutoff", type=int)
        p.add_argument("--parallel", type=int, default=1, help="worker processes")

    p = sub.add_parser("run", help="run a learner x strategy x seed grid")
    grid_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablation", help="re-run a batch config for several K")
    grid_flags(p)
    p.add_argument("--k", default="10,50,200", help="comma-separated batch sizes")
    p.add_argument("--reset-toggle", action="store_true",
                   help="run both carry_forward and reset_each_batch")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("oracle", help="mapping expectation, Monte Carlo check and band")
    p.add_argument("--classes", "-C", type=int, default=10)
    p.add_argument("--boundary", type=int, nargs=2, default=[2, 4], metavar=("LOW", "HIGH"))
    p.add_argument("--noise", type=int, nargs=2, default=[4, 6], metavar=("LOW", "HIGH"))
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fixtures", help="write synthetic datasets for tests and demos")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
