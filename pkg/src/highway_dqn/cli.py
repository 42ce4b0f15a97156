"""Command-line entry point: ``highway-dqn {train,eval,compare,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .harness import (
    CheckpointError,
    MetricsWriter,
    compare,
    evaluate,
    fmt,
    load_checkpoint,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _seed_list(text: str) -> list[int]:
    try:
        return [_seed(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="highway-dqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one agent and write metrics + checkpoints")
    p.add_argument("--config", type=Path)
    p.add_argument("--algo", choices=("dqn", "ddqn"))
    p.add_argument("--seed", type=_seed)
    p.add_argument("--episodes", type=int, help="override the config's episode count")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--config", type=Path, help="environment config (defaults to the checkpoint's)")
    p.add_argument("--out", type=Path, help="write per-episode rows to this CSV")

    p = sub.add_parser("compare", help="train DQN and DDQN on several seeds")
    p.add_argument("--config", type=Path)
    p.add_argument("--seeds", type=_seed_list, required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="render figures from a metrics or comparison CSV")
    p.add_argument("--metrics", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _cmd_train(args) -> int:
    config = load_config(args.config, algo=args.algo, seed=args.seed, episodes=args.episodes)
    history, _ = train(config, args.out)
    last = history[-100:]
    if last:
        print(f"trained {config.algo} seed={config.seed} episodes={len(history)} "
              f"final return(100)={sum(m.total_reward for m in last) / len(last):.3f}")
    print(f"metrics: {args.out / 'metrics.csv'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = load_config(args.config) if args.config else ckpt.config
    result = evaluate(ckpt.net, config, args.episodes, args.seed)
    rows = result.pop("rows")
    if args.out:
        with MetricsWriter(args.out, list(rows[0]) if rows else ["episode"]) as w:
            for r in rows:
                w.write([fmt(v) if isinstance(v, float) else str(v) for v in r.values()])
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = load_config(args.config, episodes=args.episodes)
    result = compare(config, args.seeds, args.out, jobs=args.jobs)
    for s in result["summary"]:
        print(json.dumps(s))
    for algo, seed, err in result["failures"]:
        print(f"FAILED {algo} seed={seed}: {err}", file=sys.stderr)
    return EXIT_RUNTIME if result["failures"] else EXIT_OK


def _cmd_report(args) -> int:
    from .report import render_report

    for path in render_report(args.metrics, args.out):
        print(path)
    return EXIT_OK


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "compare": _cmd_compare,
            "report": _cmd_report}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
