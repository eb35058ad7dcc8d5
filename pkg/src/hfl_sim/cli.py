"""Command line front end.

    hfl-sim run --config cfg.json [--set key=value ...] [--out dir] [--seed n]
    hfl-sim presets

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .sim import ConfigError, describe_presets, run_experiment, validate_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hfl-sim",
        description="Latency and training simulator for hierarchical federated learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment named in the config")
    p_run.add_argument("--config", required=True, help="path to a JSON config file")
    p_run.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field (dotted path, JSON value)",
    )
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    sub.add_parser("presets", help="list radio presets, experiments and defaults")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            print(json.dumps(describe_presets(), indent=2, sort_keys=True))
            return 0
        try:
            raw = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError([f"config: cannot read {args.config}: {exc}"]) from exc
        cfg = validate_config(raw, overrides=args.overrides, out_dir=args.out, seed=args.seed)
        for path in run_experiment(cfg):
            print(path)
        return 0
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, distinct from bad config
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
