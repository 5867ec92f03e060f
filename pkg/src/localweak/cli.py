"""Command line entry point: `localweak <stage> --config pipeline.toml`."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from .evaluation import SLICE_DIMENSIONS
from .pipeline import (
    ConfigError,
    EXIT_INTERNAL,
    EXIT_OK,
    EXIT_USAGE,
    MissingInputError,
    STAGE_ORDER,
    WorkdirLockedError,
    load_config,
    run_stage,
)


def _parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="localweak",
        description=(
            "Run one stage of the local-news weak-supervision pipeline. "
            "Stages read and write artifacts under the working directory and "
            "record provenance in manifest.json."
        ),
    )
    parser.add_argument("stage", choices=STAGE_ORDER, help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="pipeline TOML config file")
    parser.add_argument(
        "--workdir", default=None, help="artifact directory (overrides config)"
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="override the config seed"
    )
    parser.add_argument(
        "--cutoff",
        type=float,
        action="append",
        default=None,
        help="evaluation cutoff; repeatable, replaces the config list",
    )
    parser.add_argument(
        "--slice",
        choices=SLICE_DIMENSIONS,
        action="append",
        default=None,
        help="report slice dimension; repeatable, replaces the config list",
    )
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = load_config(
            args.config,
            workdir=args.workdir,
            seed=args.seed,
            cutoffs=args.cutoff,
            slices=args.slice,
        )
        outputs = run_stage(args.stage, cfg)
    except (ConfigError, MissingInputError) as err:
        print(f"localweak: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except WorkdirLockedError as err:
        print(f"localweak: {err}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as err:  # noqa: BLE001 - last-resort CLI boundary
        logging.getLogger(__name__).exception("stage failed")
        print(f"localweak: internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL
    for path in outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
