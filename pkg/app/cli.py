"""
Command-line interface.

    python main.py run configs/example_experiment.json --seeds 0 1 2
    python main.py scale configs/example_scaling.json --out-dir results/scaling
"""
import argparse
from pathlib import Path
from typing import Optional, Sequence

from app.attribution.exceptions import AttributionError, ConfigValidationError
from app.attribution.experiment.runner import run_experiment
from app.attribution.experiment.scaling import run_scaling
from app.attribution.logging_utils import configure_structlog, get_logger
from app.config import get_config

logger = get_logger("attribution.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attribution",
        description="Consistent two-level feature attribution experiments.",
    )
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run a benchmark experiment from a JSON config.")
    run.add_argument("config", type=Path, help="Path to the experiment JSON config.")
    run.add_argument("--out-dir", type=Path, default=None, help="Override the output directory.")
    run.add_argument("--seeds", type=int, nargs="+", default=None, help="Override the config seeds.")
    run.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    scale = subparsers.add_parser("scale", help="Measure solver wall time against the perturbation budget.")
    scale.add_argument("config", type=Path, help="Path to the scaling JSON config.")
    scale.add_argument("--out-dir", type=Path, default=None, help="Override the output directory.")
    scale.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_config()
    configure_structlog(
        level="WARNING" if args.quiet else settings.LOG_LEVEL,
        json_output=settings.LOG_JSON,
    )

    try:
        if args.command == "run":
            return run_experiment(
                args.config,
                out_dir=args.out_dir,
                seeds=args.seeds,
                default_output_dir=settings.OUTPUT_DIR,
            )
        return run_scaling(args.config, out_dir=args.out_dir, default_output_dir=settings.OUTPUT_DIR)
    except ConfigValidationError as e:
        logger.error("invalid_config", field=e.field, reason=e.reason)
        return EXIT_CONFIG
    except AttributionError as e:
        logger.error("run_failed", error=str(e), error_type=type(e).__name__)
        return EXIT_FAILURE
