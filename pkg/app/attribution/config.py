"""
Attribution Toolkit Configuration
Centralized solver defaults, hyperparameter grids and synthetic bench settings.
"""
from dataclasses import dataclass, replace
from typing import Literal

from app.attribution.exceptions import ConfigValidationError


# Hyperparameter search grids (validation split)
LAMBDA_GRID: tuple[float, ...] = (0.1, 1.0)
MU2_GRID: tuple[float, ...] = (0.001, 0.01, 0.1)


@dataclass(frozen=True)
class SolverConfig:
    """ADMM solver configuration for the consistency-constrained problem."""
    lambda_high: float = 0.1
    lambda_low: float = 0.1
    mu1: float = 0.1
    mu2: float = 0.01
    eps1: float = 1e-4
    eps2: float = 1e-4
    max_iters: int = 10_000
    init: Literal["zero", "custom"] = "zero"

    # Residual balancing of mu1 and mu2
    adaptive_penalty: bool = True
    adapt_until: int = 2_000
    penalty_ratio: float = 10.0
    penalty_scale: float = 2.0

    def __post_init__(self):
        for name in ("lambda_high", "lambda_low"):
            if getattr(self, name) < 0:
                raise ConfigValidationError(name, "must be >= 0")
        for name in ("mu1", "mu2", "eps1", "eps2"):
            if getattr(self, name) <= 0:
                raise ConfigValidationError(name, "must be > 0")
        if self.max_iters < 1:
            raise ConfigValidationError("max_iters", "must be >= 1")
        if self.init not in ("zero", "custom"):
            raise ConfigValidationError("init", f"unknown initialization '{self.init}'")
        if self.penalty_ratio <= 1 or self.penalty_scale <= 1:
            raise ConfigValidationError("penalty_ratio", "ratio and scale must exceed 1")

    def with_overrides(self, **kwargs) -> "SolverConfig":
        """Return a copy with the given fields replaced (re-validated)."""
        return replace(self, **kwargs)


@dataclass(frozen=True)
class BenchDefaults:
    """Synthetic benchmark defaults."""
    group_sizes: tuple[int, ...] = (4, 4, 4, 4)
    linear_total: float = 0.8
    mil_steepness: float = 6.0
    mil_threshold: float = 1.0
    mil_low_label_threshold: float = 0.5
    bias_gap: float = 0.2
    weight_kind: str = "cosine"
    random_seed: int = 42


@dataclass(frozen=True)
class ScalingDefaults:
    """Wall-time scaling run defaults (fixed dims, N_L sweep)."""
    group_sizes: tuple[int, ...] = (10,) * 10
    n_high: int = 50
    n_low: tuple[int, ...] = (100, 200, 400, 800, 1600)
    repeats: int = 3


# Global instances
SOLVER_CONFIG = SolverConfig()
BENCH_DEFAULTS = BenchDefaults()
SCALING_DEFAULTS = ScalingDefaults()
