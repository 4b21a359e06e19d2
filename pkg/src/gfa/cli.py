"""Command-line entry point: ``gfa <stage> [--config PATH | --model NAME] ...``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PRESETS, load_config, preset
from .errors import ConfigError, NumericalError
from .pipeline import STAGES, Run, run_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfa",
        description="Geometric fluid approximation of finite CTMCs.",
    )
    parser.add_argument("command", choices=STAGES + ("all",),
                        help="stage to run; 'all' runs every stage in order")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--config", metavar="PATH", help="YAML experiment file")
    source.add_argument("--model", choices=sorted(PRESETS),
                        help="built-in experiment preset (default: birth_death)")
    parser.add_argument("--out", metavar="DIR", help="run directory (default: <output>/<name> from the config)")
    parser.add_argument("--seed", type=int, help="override the SSA root seed")
    parser.add_argument("--stage", choices=STAGES,
                        help="run only this stage (alternative to the positional command)")
    parser.add_argument("--fast", action="store_true", help="CI-scale SSA ensembles")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _load(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.model or "birth_death")
    if args.seed is not None:
        cfg.ssa.seed = int(args.seed)
    return cfg


def _run(args) -> dict:
    cfg = _load(args)
    stage = args.stage or args.command
    if stage == "all":
        run = run_all(cfg, args.out, args.fast)
        return {"out": str(run.out), "stages": list(run.manifest.get("stages", {}))}
    run = Run(cfg, args.out, args.fast)
    _ = run.model  # validate the state space before any stage work
    result = run.run(stage)
    summary = {"out": str(run.out), "stage": stage}
    if isinstance(result, dict):
        summary["report"] = result
    return summary


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = _run(args)
    except ConfigError as exc:
        stage = getattr(exc, "stage", None)
        where = f" in stage {stage!r}" if stage else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        stage = getattr(exc, "stage", None)
        where = f" in stage {stage!r}" if stage else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
