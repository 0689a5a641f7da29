"""Command-line entry point.

Subcommands
-----------
train         train one strategy on one seed; writes training log CSV,
              checkpoint, manifest, and a training-curve figure
eval          re-evaluate a saved checkpoint on held-out scenarios
sweep-snr     all strategies across the SNR grid
sweep-region  retrain per aperture point
verify        run the acceptance checks (fast oracle ones by default)

`--config` accepts a JSON file whose keys mirror ExperimentConfig field
names exactly; `--profile` picks the defaults the file overrides.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .harness import (
    PROFILES,
    STRATEGIES,
    SWEEP_REGION_COLUMNS,
    SWEEP_SNR_COLUMNS,
    config_from_dict,
    config_hash,
    config_overrides,
    config_to_dict,
    emit_results,
    env_config,
    eval_seeds_for,
    region_sweep,
    run_strategy,
    snr_sweep,
    validate,
    write_rows_csv,
)
from .td3 import TRAINING_LOG_COLUMNS, TD3Agent, evaluate_policy, write_training_log


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crx-isac",
        description="Movable-antenna ISAC transmitter simulator and trainer",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="JSON config file mirroring ExperimentConfig")
        p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
        p.add_argument("--seed", type=int, default=None, help="experiment seed")
        p.add_argument("--strategy", choices=STRATEGIES, default=None)
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("train", help="train one strategy on one seed")
    common(p, "runs/train")

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    common(p, "runs/eval")
    p.add_argument("--checkpoint", required=True, help="checkpoint .npz path")

    p = sub.add_parser("sweep-snr", help="all strategies across the SNR grid")
    common(p, "runs/snr")

    p = sub.add_parser("sweep-region", help="retrain per aperture point")
    common(p, "runs/region")
    p.add_argument("--all-strategies", action="store_true",
                   help="sweep every strategy, not just the configured one")

    p = sub.add_parser("verify", help="run acceptance checks")
    p.add_argument("--full", action="store_true",
                   help="include the slow training-based criteria")
    return parser


def resolve_config(args):
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = config_from_dict(json.load(fh))
    else:
        cfg = PROFILES[args.profile]()
    if getattr(args, "strategy", None):
        from dataclasses import replace

        cfg = replace(cfg, strategy=args.strategy)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        cfg = replace(cfg, seeds=(args.seed,))
    validate(cfg)
    return cfg


def cmd_train(args) -> int:
    from .plots import plot_training_curve

    cfg = resolve_config(args)
    seed = cfg.seeds[0]
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, f"training_log_{cfg.strategy}_{seed}.csv")
    res = run_strategy(cfg.strategy, cfg, seed, log_path=log_path)
    print(f"strategy {cfg.strategy} seed {seed}: "
          f"eval CRB {res.eval.mean_crb_db:.2f} dB, "
          f"min SINR {res.eval.mean_min_sinr_db:.2f} dB, "
          f"feasible {res.eval.feasibility_rate:.2f}, "
          f"wall {res.wall_time_s:.1f} s")
    if res.train_result is not None:
        ckpt = os.path.join(args.out, f"agent_{cfg.strategy}_{seed}.npz")
        res.train_result.agent.save(
            ckpt, extra={"strategy": cfg.strategy, "seed": seed,
                         "config": config_to_dict(cfg)})
        plot_training_curve(
            res.train_result.logs,
            os.path.join(args.out, f"training_curve_{cfg.strategy}_{seed}.png"),
            title=f"{cfg.strategy} seed {seed}",
        )
    manifest = {
        "command": "train", "version": __version__,
        "config_hash": config_hash(cfg), "profile": cfg.profile,
        "overrides": config_overrides(cfg), "config": config_to_dict(cfg),
        "strategy": cfg.strategy, "seed": seed,
        "wall_time_s": res.wall_time_s,
    }
    with open(os.path.join(args.out, "train_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    agent, _, extra = TD3Agent.load(args.checkpoint)
    strategy = extra.get("strategy", cfg.strategy)
    freeze = strategy == "FPA_TD3"
    ecfg = env_config(cfg, freeze_positions=freeze)
    if agent.state_dim != ecfg.state_dim or agent.action_dim != ecfg.action_dim:
        print(
            f"checkpoint dims (state {agent.state_dim}, action {agent.action_dim}) "
            f"do not match the config (state {ecfg.state_dim}, action {ecfg.action_dim}); "
            "pass the config the agent was trained with",
            file=sys.stderr,
        )
        return 2
    seeds = eval_seeds_for(cfg)
    ev = evaluate_policy(agent.act, ecfg, seeds)
    os.makedirs(args.out, exist_ok=True)
    rows = [
        {"scenario_seed": int(s), "crb_db": float(c), "min_sinr_db": float(m),
         "mean_reward": float(r), "feasible": float(f)}
        for s, c, m, r, f in zip(ev.seeds, ev.crb_db, ev.min_sinr_db,
                                 ev.mean_reward, ev.feasible)
    ]
    path = os.path.join(args.out, "eval.csv")
    write_rows_csv(path, ("scenario_seed", "crb_db", "min_sinr_db",
                          "mean_reward", "feasible"), rows, cfg)
    print(f"{strategy}: mean CRB {ev.mean_crb_db:.2f} dB, "
          f"min SINR {ev.mean_min_sinr_db:.2f} dB, "
          f"feasible {ev.feasibility_rate:.2f} -> {path}")
    return 0


def cmd_sweep_snr(args) -> int:
    from .plots import plot_snr_sweep

    cfg = resolve_config(args)
    rows = snr_sweep(cfg, out_dir=args.out)
    plot_snr_sweep(rows, os.path.join(args.out, "snr_sweep.png"))
    print(f"wrote {len(rows)} rows to {os.path.join(args.out, 'snr_sweep.csv')}")
    return 0


def cmd_sweep_region(args) -> int:
    from .plots import plot_region_sweep

    cfg = resolve_config(args)
    strategies = STRATEGIES if args.all_strategies else None
    rows = region_sweep(cfg, strategies=strategies, out_dir=args.out)
    plot_region_sweep(rows, os.path.join(args.out, "region_sweep.png"))
    print(f"wrote {len(rows)} rows to {os.path.join(args.out, 'region_sweep.csv')}")
    return 0


def cmd_verify(args) -> int:
    from .acceptance import run_criteria

    results = run_criteria(full=args.full)
    failed = [name for name, ok, _ in results if not ok]
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "sweep-snr": cmd_sweep_snr,
        "sweep-region": cmd_sweep_region,
        "verify": cmd_verify,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
