"""Command-line entry point: train, eval, compare-modes, sweep.

Every setting lives in the TOML config except the seed, which may also come
from ``--seed`` or the ``STARS_ISAC_SEED`` environment variable (flag wins).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, load_config

SEED_ENV = "STARS_ISAC_SEED"


def resolve_seed(flag: int | None, default: int, environ=os.environ) -> int:
    if flag is not None:
        return int(flag)
    raw = environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return int(default)
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}: expected an integer, got {raw!r}") from exc


def _load(args):
    scenario, hyper = load_config(args.config)
    seed = resolve_seed(getattr(args, "seed", None), hyper.training.seed)
    return scenario, hyper.with_seed(seed)


def _print_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _parse_values(text: str) -> list:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(int(item))
        except ValueError:
            try:
                out.append(float(item))
            except ValueError:
                out.append(item)  # unit strings such as 30dBm
    if not out:
        raise argparse.ArgumentTypeError("empty value list")
    return out


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def cmd_train(args) -> int:
    scenario, hyper = _load(args)
    res = harness.run_training(scenario, hyper, args.algo, args.out, transition_log=args.transition_log)
    _print_json({
        "algorithm": args.algo,
        "seed": hyper.training.seed,
        "episodes": len(res.metrics),
        "out": str(args.out),
        "final_eval": None if res.final_eval is None else res.final_eval.as_dict(),
    })
    return 0


def _checkpoint_dir(path: Path) -> Path:
    # a run directory holds its last policies under final/
    if not (path / "rsu.ckpt").exists() and (path / "final" / "rsu.ckpt").exists():
        return path / "final"
    return path


def cmd_eval(args) -> int:
    scenario, hyper = _load(args)
    reflection = None if args.reflection is None else args.reflection == "on"
    summary = harness.evaluate_checkpoint(
        _checkpoint_dir(Path(args.checkpoint)), scenario, args.episodes, hyper.training.seed, reflection
    )
    _print_json(summary.as_dict())
    return 0


def cmd_compare(args) -> int:
    scenario, hyper = _load(args)
    _print_json(harness.compare_modes(scenario, hyper, args.algo, args.out))
    return 0


def cmd_sweep(args) -> int:
    scenario, hyper = _load(args)
    seeds = args.seeds if args.seeds is not None else [hyper.training.seed]
    rows = harness.sweep(scenario, hyper, args.algo, args.param, args.values, seeds, args.out)
    _print_json(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stars-isac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train both agents and write metrics.csv plus checkpoints")
    t.add_argument("--algo", choices=harness.ALGORITHMS, required=True)
    t.add_argument("--config", type=Path)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--transition-log", type=Path, help="optional JSON-lines log of every transition")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="run deterministic policies from a checkpoint directory")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--config", type=Path)
    e.add_argument("--episodes", type=int, default=5)
    e.add_argument("--seed", type=int)
    e.add_argument("--reflection", choices=("on", "off"), help="override the scenario's reflection flag")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare-modes", help="train with and without STARS reflection on one seed")
    c.add_argument("--algo", choices=harness.ALGORITHMS, required=True)
    c.add_argument("--config", type=Path)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", type=Path)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep", help="repeat training over a grid of one scenario parameter")
    s.add_argument("--param", choices=harness.SWEEP_KEYS, required=True)
    s.add_argument("--values", type=_parse_values, required=True, help="comma-separated, e.g. 4,16,36")
    s.add_argument("--algo", choices=harness.ALGORITHMS, default="mappo")
    s.add_argument("--config", type=Path)
    s.add_argument("--seeds", type=_parse_seeds, help="comma-separated seeds; default is the resolved seed")
    s.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
