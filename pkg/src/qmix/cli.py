"""Command line entry point: ``qmix run|list-scenarios|validate``."""
from __future__ import annotations

import argparse
import json
import sys

from threadpoolctl import threadpool_limits

from . import experiments as ex
from .approx import BudgetError, PreconditionError
from .limit_resolvent import SolverError

EXIT_SCHEMA, EXIT_SOLVER, EXIT_BUDGET = 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmix", description=__doc__)
    ap.add_argument("--seed", type=int, default=None, help="replace the config's seed list by this single seed")
    ap.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    ap.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread limit")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config")
    sub.add_parser("list-scenarios", help="print the canned scenarios")
    val = sub.add_parser("validate", help="check a config and print the merged version")
    val.add_argument("config")
    return ap


def _load(args) -> dict:
    cfg = ex.load_config(args.config)
    if not isinstance(cfg, dict):
        raise ex.ConfigError("config must be a JSON object")
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name, sc in ex.SCENARIOS.items():
            print(f"{name:22s} {sc.description}")
        return 0
    try:
        cfg = _load(args)
        if args.command == "validate":
            print(json.dumps(ex.validate_config(cfg), indent=2, sort_keys=True))
            return 0
        with threadpool_limits(limits=args.threads):
            meta = ex.run_config(cfg, args.out)
    except ex.ConfigError as exc:
        print(f"qmix: config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SolverError, PreconditionError) as exc:
        print(f"qmix: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ex.BudgetExceeded, BudgetError) as exc:
        print(f"qmix: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    out = args.out or meta["config"]["output_dir"]
    print(f"{meta['scenario']}: {meta['rows']} rows, {meta['cms_checks']} CMS checks "
          f"in {meta['elapsed_seconds']:.1f}s -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
