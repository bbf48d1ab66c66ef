"""Command-line entry point: synth | fit | plan | report | serve.

Every data subcommand takes --config <json> plus a few targeted overrides.
Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import DataError
from .pipeline import (
    ConfigError,
    PipelineError,
    RunConfig,
    cmd_fit,
    cmd_plan,
    cmd_report,
    cmd_synth,
)
from .planner import PlannerError
from .surrogate import SurrogateError


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="path to the run config JSON")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--L", type=int, help="override search iteration budget")
    p.add_argument("--cell-sigma", type=float, help="override grid cell size factor")
    p.add_argument("--direction", choices=("minimize", "maximize"), help="override direction")
    p.add_argument("--out", help="override output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actionpath")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, descr in (
        ("synth", "generate the synthetic dataset"),
        ("fit", "fit the regressor and surrogate"),
        ("plan", "batch path search over test instances"),
        ("report", "render figures and tables from a planned run"),
    ):
        p = sub.add_parser(name, help=descr)
        _add_config_args(p)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--bundle", help="run directory with fit artifacts")
    serve.add_argument("--bind", help="bind address (default 127.0.0.1)")
    serve.add_argument("--port", type=int, help="port (default 8080)")
    serve.add_argument("--max-l", type=int, dest="max_l", help="reject plans above this L")
    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config)
    overrides = {
        "seed": args.seed,
        "L": args.L,
        "cell_sigma": args.cell_sigma,
        "direction": args.direction,
        "out_dir": args.out,
    }
    raw = config.to_dict()
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    return RunConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        from .service import ServiceSettings, main as serve_main

        try:
            settings = ServiceSettings.from_env_and_args(args)
            if not settings.bundle:
                print("serve: no bundle given (--bundle or ACTIONPATH_BUNDLE)", file=sys.stderr)
                return 1
            serve_main(settings)
        except (ConfigError, DataError) as e:
            print(f"serve: {e}", file=sys.stderr)
            return 1
        except Exception as e:
            print(f"serve: {e}", file=sys.stderr)
            return 2
        return 0

    try:
        config = _load_config(args)
        result = {
            "synth": cmd_synth,
            "fit": cmd_fit,
            "plan": cmd_plan,
            "report": cmd_report,
        }[args.command](config)
    except (ConfigError, DataError, SurrogateError, PlannerError) as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return 1
    except (PipelineError, OSError) as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return 2
    print(json.dumps(result, sort_keys=True, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
