"""Command-line interface: train, eval, export-features, check.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 checkpoint or episode-file error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .agent import Agent
from .checks import SUITES, run_checks
from .config import ConfigError, RunConfig, config_from_dict, load_config, profile
from .optim import CheckpointError
from .replay import EpisodeError
from .trainer import (Trainer, evaluate_grid, evaluate_policy,
                      export_feature_rows, random_baseline_stats)

GRID_COLUMNS = ("mass_mult", "damping_mult", "split", "return_mean", "return_std", "episodes")


def _resolve_train_config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = profile(args.profile, task=args.task or "pendulum_swingup")
    overrides = {}
    if args.task is not None:
        overrides["task"] = args.task
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ablation is not None:
        overrides["ablation"] = args.ablation
    if overrides:
        doc = json.loads(cfg.to_json())
        doc.update(overrides)
        cfg = config_from_dict(doc)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    out = Path(args.out)
    if args.checkpoint is not None:
        if args.config is not None or args.seed is not None or args.ablation is not None:
            raise ConfigError("--checkpoint resumes with the stored configuration; "
                              "it cannot be combined with --config/--seed/--ablation")
        trainer = Trainer.resume(args.checkpoint, out)
    else:
        trainer = Trainer(_resolve_train_config(args), out)
    summary = trainer.train(progress=args.progress)
    if not args.no_figures:
        from .figures import render_training_curves
        render_training_curves(trainer.metrics_path, out / "training_curves.png")
    print(json.dumps(summary, indent=2))
    return 0


def _load_agent(path) -> tuple[Agent, dict]:
    agent, meta = Agent.load(path)
    return agent, meta


def cmd_eval(args) -> int:
    agent, meta = _load_agent(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else agent.cfg.seed
    env_step = int(meta.get("trainer", {}).get("env_steps", 0))
    splits = ["train", "test"] if args.split == "both" else [args.split]

    if args.grid:
        rows = evaluate_grid(agent, splits, args.episodes, seed)
        grid_path = out / "grid.csv"
        with open(grid_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=GRID_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {grid_path} ({len(rows)} contexts)")
        if not args.no_figures:
            from .figures import render_context_grid
            fig_path = render_context_grid(rows, out / "context_grid.png")
            print(f"wrote {fig_path}")
        return 0

    results = [evaluate_policy(agent, split, args.episodes, seed, env_step)
               for split in splits]
    baseline = random_baseline_stats(agent, 20, seed)
    report = {"checkpoint": str(args.checkpoint), "env_steps": env_step,
              "results": results, "random_baseline": baseline}
    (out / "eval.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for res in results:
        print(f"{res['split']}: mean return {res['return_mean']:.2f} "
              f"(std {res['return_std']:.2f}, {res['episodes']} episodes)")
    print(f"random baseline: mean return {baseline['return_mean']:.2f}")
    return 0


def cmd_export_features(args) -> int:
    agent, _ = _load_agent(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else agent.cfg.seed
    d = agent.cfg.proto_dim
    header = (["task", "mass_mult", "damping_mult", "step"]
              + [f"u_{i}" for i in range(d)] + [f"e_{i}" for i in range(d)]
              + ["w_argmax", "w_max"])
    path = out / "features.csv"
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in export_feature_rows(agent, args.split, args.episodes, seed):
            writer.writerow([row["task"], row["mass_mult"], row["damping_mult"], row["step"]]
                            + [repr(float(v)) for v in row["u"]]
                            + [repr(float(v)) for v in row["e"]]
                            + [row["w_argmax"], repr(row["w_max"])])
            count += 1
    print(f"wrote {path} ({count} steps)")
    return 0


def cmd_check(args) -> int:
    names = args.suite if args.suite else None
    results = run_checks(names)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    if failed:
        print(f"{failed} of {len(results)} suites failed")
        return 1
    print(f"all {len(results)} suites passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protocad",
        description="Model-based reinforcement learning with prototypical "
                    "context assignments; trains, evaluates and verifies "
                    "on a single machine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an agent and write reports")
    p_train.add_argument("--config", type=Path, help="JSON run configuration")
    p_train.add_argument("--profile", choices=("desk", "reference"), default="desk",
                         help="built-in configuration profile (when no --config)")
    p_train.add_argument("--task", choices=("pendulum_swingup", "msd_reach"))
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--ablation", choices=("full", "no_projection", "plain_swav"))
    p_train.add_argument("--checkpoint", type=Path, help="resume from this checkpoint")
    p_train.add_argument("--out", type=Path, required=True, help="output directory")
    p_train.add_argument("--no-figures", action="store_true",
                         help="skip PNG rendering next to the delimited reports")
    p_train.add_argument("--progress", action="store_true", help="print per-cycle lines")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--out", type=Path, required=True)
    p_eval.add_argument("--split", choices=("train", "test", "both"), default="test")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--grid", action="store_true",
                        help="evaluate every context in the split's grid, write grid.csv")
    p_eval.add_argument("--seed", type=int, help="evaluation seed (default: run seed)")
    p_eval.add_argument("--no-figures", action="store_true")
    p_eval.set_defaults(fn=cmd_eval)

    p_exp = sub.add_parser("export-features",
                           help="write per-step context diagnostics to CSV")
    p_exp.add_argument("--checkpoint", type=Path, required=True)
    p_exp.add_argument("--out", type=Path, required=True)
    p_exp.add_argument("--split", choices=("train", "test"), default="test")
    p_exp.add_argument("--episodes", type=int, default=2)
    p_exp.add_argument("--seed", type=int)
    p_exp.set_defaults(fn=cmd_export_features)

    p_check = sub.add_parser("check", help="run built-in verification suites")
    p_check.add_argument("--suite", action="append", choices=sorted(SUITES),
                         help="run only this suite (repeatable; default: all)")
    p_check.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except (CheckpointError, EpisodeError) as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
