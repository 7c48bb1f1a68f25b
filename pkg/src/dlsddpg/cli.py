"""Command line entry point: ``dlsddpg {train,eval,suite}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .harness.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .harness.config import PROFILES, ZERO_REG_CHOICES, TrainConfig, load_config_file, profile_config
from .harness.suite import run_suite
from .harness.training import Trainer, eval_rng, evaluate

EXIT_DIVERGED = 3

LR_EVENT_COLUMNS = (
    "step", "n_theta", "n_phi",
    "beta_a_before", "beta_a_prime_before", "beta_c_before", "beta_c_prime_before",
    "beta_a", "beta_a_prime", "beta_c", "beta_c_prime",
    "actor_reset", "critic_reset", "actor_solved", "critic_solved",
)


def parse_seeds(text: str) -> list[int]:
    """``"1..8"`` (inclusive) or ``"0,3,5"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = (int(p) for p in text.split("..", 1))
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        seeds = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", choices=("pendulum", "balancebot"))
    p.add_argument("--steps", type=int, help="total environment steps (t_max)")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--config", type=Path, help="key=value file applied on top of the profile")
    p.add_argument("--action-mode", choices=("oac", "aac"))
    p.add_argument("--no-ddpg-actor", action="store_true")
    p.add_argument("--no-ddpg-critic", action="store_true")
    p.add_argument("--no-lr-actor", action="store_true")
    p.add_argument("--no-lr-critic", action="store_true")
    p.add_argument("--fix-beta-c", type=float, metavar="VALUE",
                   help="hold the critic coefficients at VALUE instead of scheduling them")
    p.add_argument("--zero-reg", choices=ZERO_REG_CHOICES[1:])
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlsddpg", description="DLS-DDPG training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one seed")
    _add_run_options(train)
    train.add_argument("--seed", type=int)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0, help="evaluation rng seed")

    suite = sub.add_parser("suite", help="train several seeds and aggregate")
    _add_run_options(suite)
    suite.add_argument("--seeds", type=parse_seeds, default=parse_seeds("1..8"))
    suite.add_argument("--workers", type=int, default=1)
    return parser


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    """Profile, then config file, then explicit flags."""
    cfg = profile_config(args.profile)
    if args.config is not None:
        cfg = load_config_file(args.config, cfg)
    changes = {}
    if args.env is not None:
        changes["env"] = args.env
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if args.steps is not None:
        changes["t_max"] = args.steps
    if args.action_mode is not None:
        changes["action_mode"] = args.action_mode
    for flag, key in (
        ("no_ddpg_actor", "use_ddpg_actor"),
        ("no_ddpg_critic", "use_ddpg_critic"),
        ("no_lr_actor", "use_lr_actor"),
        ("no_lr_critic", "use_lr_critic"),
    ):
        if getattr(args, flag):
            changes[key] = False
    if args.fix_beta_c is not None:
        changes["fix_beta_c"] = args.fix_beta_c
    if args.zero_reg is not None:
        changes["zero_reg"] = args.zero_reg
    return cfg.replace(**changes).validate()


def lr_events_csv(events) -> str:
    lines = [",".join(LR_EVENT_COLUMNS)]
    for ev in events:
        vals = [str(ev.step)]
        vals += [format(float(v), ".17g") for v in (ev.n_theta, ev.n_phi, *ev.betas_before, *ev.betas_after)]
        vals += [str(int(f)) for f in (ev.actor_reset, ev.critic_reset, ev.actor_solved, ev.critic_solved)]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def _train(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    tr = Trainer(cfg)
    curve = tr.run()
    (out / "curve.csv").write_text(curve.to_csv(), encoding="utf-8")
    (out / "lr_events.csv").write_text(lr_events_csv(curve.lr_events), encoding="utf-8")
    save_checkpoint(out / "checkpoint.bin", Checkpoint.from_trainer(tr))
    if curve.diverged:
        print(f"diverged: {curve.diverged}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"final moving average {curve.final_ma():.2f} after {tr.t} steps")
    return 0


def _eval(args: argparse.Namespace) -> int:
    if args.episodes < 1:
        print("--episodes must be >= 1", file=sys.stderr)
        return 2
    cp = load_checkpoint(args.checkpoint)
    tr = cp.to_trainer()
    mean, std, _ = evaluate(tr.policy(), cp.env_spec.name, args.episodes, eval_rng(args.seed, cp.step))
    print(f"episodes={args.episodes} mean={mean:.6g} std={std:.6g}")
    return 0


def _suite(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    res = run_suite(cfg, args.seeds, workers=args.workers)
    for seed, curve in zip(res.seeds, res.curves):
        (out / f"curve_seed{seed}.csv").write_text(curve.to_csv(), encoding="utf-8")
    (out / "aggregate.csv").write_text(res.to_csv(), encoding="utf-8")
    print(f"final-window score {res.final_mean:.2f} +/- {res.final_std:.2f} over seeds {res.seeds}")
    diverged = [s for s, c in zip(res.seeds, res.curves) if c.diverged]
    if diverged:
        print(f"diverged seeds: {diverged}", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"train": _train, "eval": _eval, "suite": _suite}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
