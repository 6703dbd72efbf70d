"""Experiment orchestration: multi-seed training runs, k-sweeps, CSV and manifest output.

One network realisation is fixed per experiment; every seed starts from a
copy of it and owns its own dynamics, agent and evaluation streams, split
from the seed with :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from . import __version__
from .baselines import es_rates, sp_rates
from .env import STATIC, TIME_VARYING, BlockageConfig, EnvConfig, RateEnv
from .flowlp import restricted_capacity
from .metrics import count_blocked_paths
from .sac import TRAINING_LOG_COLUMNS, SacAgent, SacConfig, evaluate, train_episode
from .topology import Network, Path, generate_network, path_is_blocked, read_network, select_paths

FLOAT_FORMAT = "{:.9g}"


@dataclass
class NetworkSpec:
    n_relays: int = 15
    cap_range: tuple[float, float] = (0.0, 10.0)
    weight_range: tuple[float, float] = (0.0, 250.0)
    fully_connected: bool = True
    seed: int = 0
    file: str | None = None

    def build(self) -> Network:
        if self.file:
            return read_network(self.file)
        return generate_network(self.n_relays, tuple(self.cap_range), tuple(self.weight_range),
                                self.fully_connected, self.seed)


@dataclass
class PathSpec:
    k: int = 15
    n_widest: int = 4
    seed: int = 0
    # "widest_first" lists the widest paths first; "random_first" puts the
    # random-walk paths first, which makes small prefixes weak
    order: str = "widest_first"
    file: str | None = None

    def build(self, net: Network) -> list[Path]:
        if self.file:
            return read_paths(self.file)
        paths = select_paths(net, self.k, min(self.n_widest, self.k), np.random.default_rng(self.seed))
        if self.order == "random_first":
            w = min(self.n_widest, self.k)
            paths = paths[w:] + paths[:w]
        elif self.order != "widest_first":
            raise ValueError(f"unknown path order {self.order!r}")
        return paths


@dataclass
class ExperimentConfig:
    network: NetworkSpec = field(default_factory=NetworkSpec)
    paths: PathSpec = field(default_factory=PathSpec)
    env: EnvConfig = field(default_factory=EnvConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    episodes: int = 200
    eval_repeats: int = 5
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out_dir: str = "runs/experiment"
    workers: int = 1
    # per-step invariant audit: paths with a blocked link must carry rate 0
    audit: bool = True
    # also write every training state to traces/seed_<s>.csv
    write_traces: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.network, dict):
            self.network = NetworkSpec(**self.network)
        if isinstance(self.paths, dict):
            self.paths = PathSpec(**self.paths)
        if isinstance(self.env, dict):
            self.env = EnvConfig(**self.env)
        if isinstance(self.sac, dict):
            self.sac = SacConfig(**self.sac)
        self.seeds = [int(s) for s in self.seeds]
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.episodes < 0 or self.eval_repeats < 1:
            raise ValueError("episodes must be >= 0 and eval_repeats >= 1")
        for name in ("network", "paths"):
            f = getattr(self, name).file
            if f and not os.path.exists(f):
                raise FileNotFoundError(f"{name} file {f} does not exist")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def desk_preset(**overrides) -> ExperimentConfig:
    """Small configuration for quick runs: 6 relays, 6 paths, 100 episodes."""
    cfg = ExperimentConfig(
        network=NetworkSpec(n_relays=6),
        paths=PathSpec(k=6, n_widest=2),
        episodes=100,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    cfg.__post_init__()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_paths(path) -> list[Path]:
    """Path-set file: one path per line as space-separated node ids; ``#`` starts a comment."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(tuple(int(tok) for tok in line.split()))
    return out


def write_paths(paths: Sequence[Sequence[int]], path) -> None:
    with open(path, "w") as fh:
        for p in paths:
            fh.write(" ".join(str(i) for i in p) + "\n")


@dataclass
class EpisodeMetrics:
    episode: int
    avg_training_rate: float
    evaluation_rate: float
    desired_rate: float
    restricted_capacity: float
    blocked_path_count: int
    es_rate: float
    sp_rate: float


METRIC_COLUMNS = [f.name for f in fields(EpisodeMetrics)]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FORMAT.format(float(v))


def write_csv(path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(v) for v in row])


@dataclass
class SeedResult:
    seed: int
    metrics: list[EpisodeMetrics]
    training_log: list[list]
    audit_violations: int
    audited_states: int
    wall_seconds: float
    agent: SacAgent | None = field(default=None, repr=False)
    # (episodes, k) booleans: path had a blocked link during that episode
    blocked_mask: np.ndarray | None = field(default=None, repr=False)
    trace_rows: list[list] = field(default_factory=list, repr=False)


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("agent", "dynamics", "train", "eval")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def run_seed(
    cfg: ExperimentConfig,
    net: Network,
    paths: Sequence[Path],
    seed: int,
    reference_paths: Sequence[Path] | None = None,
    progress=None,
) -> SeedResult:
    """Train one agent for ``cfg.episodes`` episodes and collect per-episode metrics."""
    t0 = time.perf_counter()
    streams = seed_streams(seed)
    net = net.copy()
    env = RateEnv(net, paths, cfg.env, rng=streams["dynamics"], reference_paths=reference_paths)
    agent = SacAgent(len(paths), cfg.sac, rng=streams["agent"])
    recording = cfg.audit or cfg.write_traces
    env.record = recording
    metrics, log, trace_rows, masks = [], [], [], []
    violations = audited = 0
    for ep in range(cfg.episodes):
        entry = train_episode(agent, env, ep, streams["train"])
        dead = np.array([path_is_blocked(net, p) for p in paths], dtype=bool)
        masks.append(dead)
        if recording:
            if cfg.audit:
                states = np.array([row.rates for row in env.trace])
                audited += len(states)
                violations += int(np.count_nonzero(states[:, dead]))
            if cfg.write_traces:
                trace_rows.extend([row.episode, row.step, *row.rates, float(row.rates.sum()), row.reward,
                                   row.valid_move] for row in env.trace)
            env.trace.clear()
        env.record = False
        eval_rate = evaluate(agent, env, cfg.eval_repeats, streams["eval"])
        env.record = recording
        own_capacity = restricted_capacity(net, env.constraints).value
        row = EpisodeMetrics(
            episode=ep,
            avg_training_rate=entry.avg_rate_this_episode,
            evaluation_rate=eval_rate,
            desired_rate=env.desired_rate(),
            restricted_capacity=own_capacity,
            blocked_path_count=count_blocked_paths(net, paths),
            es_rate=es_rates(net, paths).sum_rate,
            sp_rate=sp_rates(net, paths).sum_rate if len(paths) >= 2 else float("nan"),
        )
        if row.evaluation_rate > own_capacity + 1e-6:
            raise AssertionError(f"evaluation rate {row.evaluation_rate} exceeds capacity {own_capacity}")
        metrics.append(row)
        log.append([getattr(entry, c) for c in TRAINING_LOG_COLUMNS])
        if progress is not None:
            progress(seed, row)
    mask = np.array(masks, dtype=bool).reshape(len(masks), len(paths))
    return SeedResult(seed, metrics, log, violations, audited, time.perf_counter() - t0, agent, mask, trace_rows)


def trace_columns(k: int) -> list[str]:
    return ["episode", "step", *[f"rate_{i}" for i in range(k)], "sum_rate", "reward", "valid_move"]


def _run_seed_job(args):
    cfg, net, paths, seed, reference = args
    result = run_seed(cfg, net, paths, seed, reference)
    result.agent = None
    return result


def aggregate_metrics(results: Sequence[SeedResult]) -> list[list]:
    """Across-seed arithmetic mean of every metric column, per episode."""
    rows = []
    for ep in range(len(results[0].metrics)):
        per_seed = [asdict(r.metrics[ep]) for r in results]
        row = [ep]
        for col in METRIC_COLUMNS[1:]:
            vals = [m[col] for m in per_seed]
            row.append(vals[0] if len(vals) == 1 else float(np.mean(vals)))
        rows.append(row)
    return rows


def write_manifest(path, cfg: ExperimentConfig, extra: dict) -> None:
    manifest = {
        "tool": "mmsched",
        "version": __version__,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "seeds": cfg.seeds,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **extra,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


@dataclass
class ExperimentResult:
    out_dir: FsPath
    network: Network
    paths: list[Path]
    seeds: list[SeedResult]
    aggregate: list[list]

    def column(self, name: str) -> np.ndarray:
        """(seeds, episodes) array of one metric."""
        return np.array([[getattr(m, name) for m in r.metrics] for r in self.seeds], dtype=float)


def run_experiment(
    cfg: ExperimentConfig,
    net: Network | None = None,
    paths: Sequence[Path] | None = None,
    reference_paths: Sequence[Path] | None = None,
    progress=None,
) -> ExperimentResult:
    """Run every seed of ``cfg`` and write its outputs to ``cfg.out_dir``.

    The directory gets one ``seed_<s>.csv`` of EpisodeMetrics rows per seed,
    ``aggregate.csv`` with their per-episode means, ``manifest.json`` and the
    per-episode training logs under ``training/``.
    """
    out = FsPath(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = cfg.network.build() if net is None else net
    paths = cfg.paths.build(net) if paths is None else list(paths)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    results: list[SeedResult] = []
    try:
        if cfg.workers > 1 and len(cfg.seeds) > 1:
            jobs = [(cfg, net, paths, s, reference_paths) for s in cfg.seeds]
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_run_seed_job, jobs))
        else:
            for s in cfg.seeds:
                results.append(run_seed(cfg, net, paths, s, reference_paths, progress))
    except Exception as exc:
        for r in results:
            _write_seed_files(out, r)
        write_manifest(out / "error_manifest.json", cfg, {
            "started_at": started,
            "completed_seeds": [r.seed for r in results],
            "error": repr(exc),
            "traceback": traceback.format_exc(),
        })
        raise
    for r in results:
        _write_seed_files(out, r)
    agg = aggregate_metrics(results) if results and cfg.episodes > 0 else []
    write_csv(out / "aggregate.csv", METRIC_COLUMNS, agg)
    write_manifest(out / "manifest.json", cfg, {
        "started_at": started,
        "paths": [list(p) for p in paths],
        "reference_paths": None if reference_paths is None else [list(p) for p in reference_paths],
        "audit": {str(r.seed): {"states": r.audited_states, "violations": r.audit_violations} for r in results},
        "wall_seconds": {str(r.seed): round(r.wall_seconds, 3) for r in results},
    })
    return ExperimentResult(out, net, paths, results, agg)


def _write_seed_files(out: FsPath, r: SeedResult) -> None:
    write_csv(out / f"seed_{r.seed}.csv", METRIC_COLUMNS, [[getattr(m, c) for c in METRIC_COLUMNS] for m in r.metrics])
    (out / "training").mkdir(exist_ok=True)
    write_csv(out / "training" / f"seed_{r.seed}.csv", TRAINING_LOG_COLUMNS, r.training_log)
    if r.trace_rows:
        (out / "traces").mkdir(exist_ok=True)
        k = len(r.trace_rows[0]) - 5
        write_csv(out / "traces" / f"seed_{r.seed}.csv", trace_columns(k), r.trace_rows)


def run_k_sweep(cfg: ExperimentConfig, k_values: Sequence[int], progress=None) -> dict[int, ExperimentResult]:
    """One experiment per k over nested prefixes of a single path list.

    The desired rate is defined relative to the largest path set so every
    run chases the same target.
    """
    k_values = list(k_values)
    if k_values != sorted(k_values) or len(set(k_values)) != len(k_values):
        raise ValueError("k_values must be strictly ascending")
    net = cfg.network.build()
    big = ExperimentConfig.from_dict({**cfg.to_dict(), "paths": {**asdict(cfg.paths), "k": k_values[-1]}})
    all_paths = big.paths.build(net)
    root = FsPath(cfg.out_dir)
    results = {}
    for k in k_values:
        sub = ExperimentConfig.from_dict({**cfg.to_dict(), "out_dir": str(root / f"k_{k}")})
        subset = all_paths[:k]
        assert subset == all_paths[:k] and all(p in all_paths for p in subset)
        results[k] = run_experiment(sub, net, subset, reference_paths=all_paths, progress=progress)
    rows = []
    for ep in range(cfg.episodes):
        row = [ep, results[k_values[0]].aggregate[ep][METRIC_COLUMNS.index("desired_rate")]]
        for k in k_values:
            row.append(results[k].aggregate[ep][METRIC_COLUMNS.index("evaluation_rate")])
        rows.append(row)
    write_csv(root / "k_sweep.csv", ["episode", "desired_rate", *[f"evaluation_rate_k{k}" for k in k_values]], rows)
    write_manifest(root / "manifest.json", cfg, {"k_values": k_values, "paths": [list(p) for p in all_paths]})
    return results


def expected_blocked_paths(net: Network, paths: Sequence[Path], lam: float) -> float:
    """Mean number of paths with at least one blocked link for one blockage draw.

    Each undirected link is blocked independently with probability
    1 - exp(-lam * w); a path survives only if all its links do.
    """
    total = 0.0
    for p in paths:
        w = sum(net.weight[a, b] for a, b in zip(p[:-1], p[1:]))
        total += 1.0 - np.exp(-lam * w)
    return float(total)


def lambda_for_blocked_paths(net: Network, paths: Sequence[Path], target: float, floor: float = 1 / 500) -> float:
    """Smallest blockage rate (at least ``floor``) whose expected blocked-path count reaches ``target``."""
    if target > len(paths):
        raise ValueError("target exceeds the number of paths")
    if expected_blocked_paths(net, paths, floor) >= target:
        return floor
    lo, hi = floor, floor
    while expected_blocked_paths(net, paths, hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("target unreachable: some paths have zero length")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if expected_blocked_paths(net, paths, mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


REGIMES = {
    "static": dict(rate_fraction=0.6, dynamics_mode=STATIC, blockage=None),
    "time_varying": dict(rate_fraction=0.5, dynamics_mode=TIME_VARYING, blockage=None),
    "blockage": dict(rate_fraction=0.5, dynamics_mode=TIME_VARYING, blockage=BlockageConfig()),
}


def regime_env(name: str, **overrides) -> EnvConfig:
    if name not in REGIMES:
        raise ValueError(f"unknown regime {name!r}; choose from {sorted(REGIMES)}")
    return EnvConfig(**{**REGIMES[name], **overrides})
