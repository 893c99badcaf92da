"""Command-line entry point: ``fkdv <kind> [--config FILE] [--key value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import io
from .scenario import COMMON, KIND_KEYS, KINDS, ScenarioError, parse_scenario, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fkdv", description="Fractional gKdV solitary-wave lab.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} scenario")
        sp.add_argument("--config", help="flat key = value scenario file")
        sp.add_argument("--root", help=f"run-root directory (default ${io.RUN_ROOT_ENV} or ./runs)")
        keys = dict(COMMON)
        keys.update(KIND_KEYS[kind])
        keys.pop("kind")
        for key in keys:
            sp.add_argument(f"--{key}", dest=f"opt_{key}", metavar="VALUE", help="overrides the config value")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
    overrides["kind"] = args.kind
    try:
        scenario = parse_scenario(args.config, overrides)
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    result = run_scenario(scenario, args.root)
    if result.status:
        print(result.error, file=sys.stderr)
    print(json.dumps({"status": result.status, "run_dir": str(result.run_dir)}))
    return result.status


if __name__ == "__main__":
    sys.exit(main())
