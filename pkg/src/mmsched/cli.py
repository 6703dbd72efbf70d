"""Command-line entry point: ``python -m mmsched <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .baselines import es_rates, sp_rates
from .env import RateEnv
from .flowlp import restricted_capacity
from .harness import (
    ExperimentConfig,
    desk_preset,
    load_config,
    read_paths,
    regime_env,
    run_experiment,
    run_k_sweep,
    run_seed,
    write_csv,
    write_manifest,
    write_paths,
    METRIC_COLUMNS,
)
from .sac import TRAINING_LOG_COLUMNS, SacAgent, evaluate
from .topology import enumerate_simple_paths, generate_network, read_network, select_paths, write_network


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (meaning depends on the command)")
    p.add_argument("--config", type=FsPath, default=None, help="JSON experiment config")
    p.add_argument("--out", type=FsPath, default=None, help="output directory")


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--desk", action="store_true", help="small preset: 6 relays, 6 paths, 100 episodes")
    p.add_argument("--regime", choices=["static", "time_varying", "blockage"], default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmsched", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mmsched {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-net", help="generate a random network file")
    _common(p)
    p.add_argument("--relays", type=int, default=15)
    p.add_argument("--cap-range", type=float, nargs=2, default=(0.0, 10.0))
    p.add_argument("--weight-range", type=float, nargs=2, default=(0.0, 250.0))
    p.add_argument("--sparse", action="store_true", help="keep each admissible link with probability --link-prob")
    p.add_argument("--link-prob", type=float, default=0.5)

    p = sub.add_parser("select-paths", help="pick k source-destination paths")
    _common(p)
    p.add_argument("--network", type=FsPath, required=True)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--n-widest", type=int, default=4)

    p = sub.add_parser("capacity", help="restricted capacity and schedule of a path set")
    _common(p)
    p.add_argument("--network", type=FsPath, required=True)
    p.add_argument("--paths", type=FsPath, default=None, help="path file (default: every simple path)")

    p = sub.add_parser("baseline", help="equal-share and shortest-path schedules")
    _common(p)
    p.add_argument("--network", type=FsPath, required=True)
    p.add_argument("--paths", type=FsPath, required=True)

    p = sub.add_parser("train", help="train one agent and write its logs and checkpoint")
    _common(p)
    _experiment_args(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a network and path set")
    _common(p)
    p.add_argument("--checkpoint", type=FsPath, required=True)
    p.add_argument("--network", type=FsPath, required=True)
    p.add_argument("--paths", type=FsPath, required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("experiment", help="multi-seed experiment with per-seed and aggregate CSVs")
    _common(p)
    _experiment_args(p)

    p = sub.add_parser("k-sweep", help="one experiment per path-set size over nested path sets")
    _common(p)
    _experiment_args(p)
    p.add_argument("--k-values", type=int, nargs="+", required=True)
    return parser


def _out_dir(args, default: str | None) -> FsPath | None:
    out = args.out if args.out is not None else (FsPath(default) if default else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return out


def _simple_manifest(out: FsPath, args, extra: dict) -> None:
    record = {
        "tool": "mmsched",
        "version": __version__,
        "command": args.command,
        "args": {k: (str(v) if isinstance(v, FsPath) else v) for k, v in vars(args).items()},
        **extra,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _experiment_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.desk:
        cfg = desk_preset()
    else:
        cfg = ExperimentConfig()
    if args.regime is not None:
        env = asdict(cfg.env)
        env.pop("blockage")
        for key in ("rate_fraction", "dynamics_mode"):
            env.pop(key)
        cfg.env = regime_env(args.regime, **env)
    if args.episodes is not None:
        cfg.episodes = args.episodes
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seeds = [args.seed + i for i in range(len(cfg.seeds))]
    if args.out is not None:
        cfg.out_dir = str(args.out)
    cfg.__post_init__()
    return cfg


def _progress(args):
    if args.quiet:
        return None

    def report(seed, row):
        print(f"seed {seed} episode {row.episode}: eval {row.evaluation_rate:.3f} "
              f"target {row.desired_rate:.3f} train {row.avg_training_rate:.3f}", file=sys.stderr)
    return report


def cmd_gen_net(args) -> int:
    net = generate_network(args.relays, args.cap_range, args.weight_range, not args.sparse,
                           seed=0 if args.seed is None else args.seed, link_prob=args.link_prob)
    out = _out_dir(args, ".")
    write_network(net, out / "network.txt")
    _simple_manifest(out, args, {"files": ["network.txt"]})
    print(out / "network.txt")
    return 0


def cmd_select_paths(args) -> int:
    net = read_network(args.network)
    paths = select_paths(net, args.k, min(args.n_widest, args.k), np.random.default_rng(args.seed or 0))
    if args.out is None:
        for p in paths:
            print(" ".join(map(str, p)))
        return 0
    out = _out_dir(args, None)
    write_paths(paths, out / "paths.txt")
    _simple_manifest(out, args, {"files": ["paths.txt"]})
    print(out / "paths.txt")
    return 0


def cmd_capacity(args) -> int:
    net = read_network(args.network)
    paths = read_paths(args.paths) if args.paths else enumerate_simple_paths(net)
    text = restricted_capacity(net, paths).format()
    print(text, end="")
    if args.out is not None:
        out = _out_dir(args, None)
        (out / "capacity.txt").write_text(text)
        _simple_manifest(out, args, {"files": ["capacity.txt"]})
    return 0


def cmd_baseline(args) -> int:
    net = read_network(args.network)
    paths = read_paths(args.paths)
    lines = []
    for name, fn in (("es", es_rates), ("sp", sp_rates)):
        if name == "sp" and len(paths) < 2:
            continue
        s = fn(net, paths)
        lines.append(f"{name} sum_rate {s.sum_rate:.17g}")
        lines.append(f"{name} rates " + " ".join(f"{r:.17g}" for r in s.rates))
        lines.append(f"{name} time_fractions " + " ".join(f"{x:.17g}" for x in s.time_fractions))
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out is not None:
        out = _out_dir(args, None)
        (out / "baseline.txt").write_text(text)
        _simple_manifest(out, args, {"files": ["baseline.txt"]})
    return 0


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    out = _out_dir(args, cfg.out_dir)
    net = cfg.network.build()
    paths = cfg.paths.build(net)
    result = run_seed(cfg, net, paths, seed, progress=_progress(args))
    write_csv(out / "training_log.csv", TRAINING_LOG_COLUMNS, result.training_log)
    write_csv(out / "metrics.csv", METRIC_COLUMNS, [[getattr(m, c) for c in METRIC_COLUMNS] for m in result.metrics])
    write_network(net, out / "network.txt")
    write_paths(paths, out / "paths.txt")
    write_manifest(out / "manifest.json", cfg, {"command": "train", "seed": seed,
                                                "audit": {"states": result.audited_states,
                                                          "violations": result.audit_violations}})
    if result.agent is not None:
        result.agent.save(out / "agent.npz")
    print(out / "training_log.csv")
    return 0


def cmd_eval(args) -> int:
    agent = SacAgent.load(args.checkpoint)
    net = read_network(args.network)
    paths = read_paths(args.paths)
    cfg = load_config(args.config).env if args.config else None
    env = RateEnv(net, paths, cfg)
    env.reset(0, dynamics=False)
    rate = evaluate(agent, env, args.repeats, np.random.default_rng(args.seed or 0), args.deterministic)
    print(f"evaluation_rate {rate:.9g}\ndesired_rate {env.desired_rate():.9g}")
    if args.out is not None:
        out = _out_dir(args, None)
        _simple_manifest(out, args, {"evaluation_rate": rate, "desired_rate": env.desired_rate()})
    return 0


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    result = run_experiment(cfg, progress=_progress(args))
    print(result.out_dir / "aggregate.csv")
    return 0


def cmd_k_sweep(args) -> int:
    cfg = _experiment_config(args)
    run_k_sweep(cfg, args.k_values, progress=_progress(args))
    print(FsPath(cfg.out_dir) / "k_sweep.csv")
    return 0


COMMANDS = {
    "gen-net": cmd_gen_net,
    "select-paths": cmd_select_paths,
    "capacity": cmd_capacity,
    "baseline": cmd_baseline,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "k-sweep": cmd_k_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"mmsched {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
