"""
Structured logging utilities for the attribution toolkit.
Uses structlog for JSON-formatted, contextual logging.
"""
import logging
import sys
from typing import Any

import structlog


def get_logger(name: str = "attribution") -> Any:
    """
    Get a structured logger instance.

    Args:
        name: Logger name (module identifier)

    Returns:
        structlog BoundLogger
    """
    return structlog.get_logger(name)


def configure_structlog(level: str = "INFO", json_output: bool = True) -> None:
    """
    Configure structlog on top of the stdlib root logger.

    Args:
        level: Minimum level name (DEBUG, INFO, WARNING, ...)
        json_output: JSON lines when True, console rendering otherwise
    """
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
    root.setLevel(numeric_level)

    renderer = (
        structlog.processors.JSONRenderer()
        if json_output
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


# Pre-configured loggers for each area
def get_perturbation_logger():
    return get_logger("attribution.perturbation")

def get_solver_logger():
    return get_logger("attribution.solvers")

def get_bench_logger():
    return get_logger("attribution.bench")

def get_evaluation_logger():
    return get_logger("attribution.evaluation")

def get_experiment_logger():
    return get_logger("attribution.experiment")
