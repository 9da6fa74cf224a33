"""Command-line entry point.

Subcommands: ingest, fit-score, te, backtest, compare, config-init.
Exit codes: 0 ok, 1 usage/config, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from .config import TEMPLATE, load_config
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="newsflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str):
        p = sub.add_parser(name, help=help_)
        if name != "config-init":
            p.add_argument("--config", required=True, help="path to the TOML run config")
            p.add_argument("--threads", type=int, default=None, help="worker threads")
            p.add_argument("--seed", type=int, default=None, help="override master_seed")
            p.add_argument("--output", default=None, help="override output directory")
        return p

    add("ingest", "load, filter, align and deduplicate the article corpus")
    add("fit-score", "rolling monthly sentiment model refits and article scoring")
    add("te", "transfer entropy study with FDR control")
    add("backtest", "long-short sentiment backtest against baselines")
    compare = add("compare", "compare two completed backtest runs")
    compare.add_argument("run_a", help="output directory of the first run")
    compare.add_argument("run_b", help="output directory of the second run")
    init = sub.add_parser("config-init", help="write a template config file")
    init.add_argument("--output", default="newsflow.toml", help="where to write the template")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "config-init":
            target = Path(args.output)
            if target.exists():
                raise ConfigError(f"{target} already exists; not overwriting")
            target.write_text(TEMPLATE, encoding="utf-8")
            print(f"wrote {target}")
            return 0
        config = load_config(
            args.config,
            seed_override=args.seed,
            output_override=args.output,
            threads_override=args.threads,
        )
        from . import commands

        if args.command == "ingest":
            commands.cmd_ingest(config)
        elif args.command == "fit-score":
            commands.cmd_fit_score(config)
        elif args.command == "te":
            commands.cmd_te(config)
        elif args.command == "backtest":
            commands.cmd_backtest(config)
        elif args.command == "compare":
            commands.cmd_compare(config, args.run_a, args.run_b)
        return 0
    except ConfigError as exc:
        print(f"newsflow: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"newsflow: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - internal errors
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
