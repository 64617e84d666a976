"""Command line entry point: ``thermalize <kind> --config <path>``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ThermalizeError
from .runner import KINDS, ExperimentConfig, run_experiment, validate

EXIT_INVALID = 2
EXIT_FAILED = 1


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="thermalize", description=__doc__)
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    ap.add_argument("--validate-only", action="store_true")
    args = ap.parse_args(argv)

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(EXIT_INVALID, type(exc).__name__, str(exc).replace("\n", " "))
    if isinstance(raw, dict):
        if args.out is not None:
            raw["output_dir"] = args.out
        if args.seed is not None:
            raw["seed"] = args.seed
    try:
        cfg = ExperimentConfig.from_dict(raw, args.kind)
        validate(cfg)
    except ThermalizeError as exc:
        return _fail(EXIT_INVALID, type(exc).__name__, str(exc))
    if args.validate_only:
        return 0
    try:
        path = run_experiment(cfg)
    except ThermalizeError as exc:
        return _fail(EXIT_FAILED, type(exc).__name__, str(exc))
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
