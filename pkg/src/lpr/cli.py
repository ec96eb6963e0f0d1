"""Command line: demo-gen, train, eval, rank-inspect.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path as FsPath

import numpy as np

from .config import ConfigError, TrainConfig, load_config, parse_config
from .tasks import TASKS, DemoFailed, generate_demo, get_task, save_demo

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def out_root(flag: str | None) -> FsPath:
    return FsPath(flag or os.environ.get("LPR_OUT_DIR") or "runs")


def code_hash() -> str:
    """Content hash over the package sources, sorted by name."""
    h = hashlib.sha256()
    for f in sorted(FsPath(__file__).parent.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    config: str
    code_hash: str
    seeds: list
    layout: dict

    def save(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as f:
            return cls(**json.load(f))


LAYOUT = {
    "config.txt": "config snapshot",
    "manifest.json": "this manifest",
    "seed_<s>/metrics.csv": "one row per eval point",
    "seed_<s>/timing.csv": "wall-clock ms per env step per eval point",
    "seed_<s>/demos/demo_<k>.json": "ingested demos",
    "seed_<s>/checkpoints/step_<n>.npz": "networks and optimizer state per eval point",
}


def _task(name: str):
    if name not in TASKS:
        raise UsageError(f"unknown task {name!r}; valid tasks: {', '.join(sorted(TASKS))}")
    return get_task(name)


def _read_config(path) -> TrainConfig:
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    if str(path).endswith(".json"):
        return parse_config(RunManifest.load(path).config)
    return load_config(path)


def cmd_demo_gen(args) -> int:
    task = _task(args.task)
    out = out_root(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written, skipped, seed = 0, [], args.seed
    while written < args.n and seed < args.seed + 10 * args.n:
        try:
            demo = generate_demo(task, seed)
        except DemoFailed:
            skipped.append(seed)
        else:
            save_demo(out / f"{task.name}_seed{seed}.json", task.name, seed, demo)
            written += 1
        seed += 1
    print(f"{task.name}: wrote {written}/{args.n} demos to {out}"
          + (f"; expert failed on seeds {skipped}" if skipped else ""))
    return EXIT_FAIL if args.n > 0 and written == 0 else EXIT_OK


def cmd_train(args) -> int:
    from .trainer import train

    if not args.config:
        raise UsageError("train needs --config")
    cfg = _read_config(args.config)
    if args.task:
        cfg = cfg.replace(task=_task(args.task).name)
    if args.seed is not None:
        cfg = cfg.replace(seeds=[args.seed])
    text = cfg.to_text()
    run_dir = FsPath(args.out) if args.out else \
        out_root(None) / f"{cfg.task}-{hashlib.sha256(text.encode()).hexdigest()[:8]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(text)
    RunManifest(text, code_hash(), list(cfg.seeds), LAYOUT).save(run_dir / "manifest.json")
    for seed in cfg.seeds:
        history, _ = train(cfg, seed, str(run_dir / f"seed_{seed}"), log=print)
        print(f"seed {seed}: final success {history[-1].success_rate:.3f}")
    print(f"run directory: {run_dir}")
    return EXIT_OK


def _load_agent(path):
    from .trainer import load_checkpoint

    if not path:
        raise UsageError("--checkpoint is required")
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def cmd_eval(args) -> int:
    from .trainer import evaluate

    agent, cfg, _ = _load_agent(args.checkpoint)
    task = _task(args.task or cfg.task)
    rate, _ = evaluate(task, agent, cfg.replace(task=task.name), args.n, args.seed or 0)
    print(f"{task.name}: {args.n} episodes, success rate {rate:.3f}")
    return EXIT_OK


def cmd_rank_inspect(args) -> int:
    from .trainer import evaluate

    agent, cfg, _ = _load_agent(args.checkpoint)
    task = _task(args.task or cfg.task)
    _, records = evaluate(task, agent, cfg.replace(task=task.name), args.n or 1, args.seed or 0)
    print("episode  stage  top_source  top_q      n_planner  n_bezier  n_policy  best_q_by_source")
    for e, rec in enumerate(records):
        for r in rec.ranks:
            q = np.asarray(r.q_values)
            best = {s: float(q[[i for i, x in enumerate(r.sources) if x == s]].max())
                    for s in ("planner", "bezier", "policy") if s in r.sources}
            counts = [r.sources.count(s) for s in ("planner", "bezier", "policy")]
            best_txt = " ".join(f"{s}={v:.4f}" for s, v in best.items())
            print(f"{e:<8d} {r.stage:<6d} {r.sources[r.greedy]:<11s} {q[r.greedy]:<10.4f} "
                  f"{counts[0]:<10d} {counts[1]:<9d} {counts[2]:<9d} {best_txt}")
        print(f"{e:<8d} outcome: {'success' if rec.success else 'failure'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lpr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    specs = {
        "demo-gen": (cmd_demo_gen, "write scripted demos as JSON"),
        "train": (cmd_train, "train from a config file (or a run manifest)"),
        "eval": (cmd_eval, "greedy evaluation of a checkpoint"),
        "rank-inspect": (cmd_rank_inspect, "per-step candidate sources and Q-values"),
    }
    for name, (fn, help_text) in specs.items():
        s = sub.add_parser(name, help=help_text)
        s.set_defaults(func=fn)
        s.add_argument("--task", required=name == "demo-gen")
        s.add_argument("--seed", type=int, default=None if name == "train" else 0)
        s.add_argument("--n", type=int, default=10 if name == "demo-gen" else 20)
        s.add_argument("--config")
        s.add_argument("--out")
        s.add_argument("--checkpoint")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if getattr(args, "n", 0) is not None and args.n < 0:
        print("error: --n must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {e} (key: {e.key})", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # in-band runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
