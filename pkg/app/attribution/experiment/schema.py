"""
Experiment Config Schema
Pydantic models for the JSON documents driving `run` and `scale`.
"""
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from app.attribution.config import BENCH_DEFAULTS, SCALING_DEFAULTS, SOLVER_CONFIG, SolverConfig
from app.attribution.exceptions import ConfigValidationError
from app.attribution.perturbation.kernels import WeightSpec

MethodName = Literal["c2fa", "lime", "bu_lime", "td_lime"]
METHODS: tuple[str, ...] = ("c2fa", "lime", "bu_lime", "td_lime")


class OracleSpec(BaseModel):
    """Synthetic oracle family and its construction parameters."""
    model_config = ConfigDict(extra="forbid")

    family: Literal["linear", "mil"] = "mil"
    group_sizes: list[int] = Field(default_factory=lambda: list(BENCH_DEFAULTS.group_sizes))
    coeffs: Union[Literal["random", "uniform"], list[float]] = "random"
    noise_std: float = Field(default=0.0, ge=0.0)
    positive_groups: Optional[list[int]] = None
    n_positive: int = Field(default=1, ge=1)
    bias_gap: float = Field(default=BENCH_DEFAULTS.bias_gap, ge=0.0, le=1.0)

    @field_validator("group_sizes")
    @classmethod
    def _positive_sizes(cls, value: list[int]) -> list[int]:
        if not value or any(d < 1 for d in value):
            raise ValueError("group sizes must be a nonempty list of positive integers")
        return value

    @field_validator("coeffs")
    @classmethod
    def _coefficients_fit_shape(cls, value, info: ValidationInfo):
        sizes = info.data.get("group_sizes")
        if isinstance(value, str) or sizes is None:
            return value
        if len(value) != sum(sizes):
            raise ValueError(f"expected {sum(sizes)} coefficients, got {len(value)}")
        total = sum(value)
        if not 0.0 <= total <= 1.0 + 1e-12:
            raise ValueError(f"coefficients sum to {total}, outside [0, 1]")
        return value

    @field_validator("positive_groups")
    @classmethod
    def _groups_in_range(cls, value, info: ValidationInfo):
        sizes = info.data.get("group_sizes")
        if value is None or sizes is None:
            return value
        if not value:
            raise ValueError("positive groups must be nonempty")
        if any(not 0 <= j < len(sizes) for j in value):
            raise ValueError(f"positive groups {value} out of range for {len(sizes)} groups")
        return value

    @field_validator("n_positive")
    @classmethod
    def _count_in_range(cls, value: int, info: ValidationInfo) -> int:
        sizes = info.data.get("group_sizes")
        if sizes is not None and value > len(sizes):
            raise ValueError(f"n_positive {value} exceeds {len(sizes)} groups")
        return value

    def to_oracle_spec(self) -> dict:
        spec = self.model_dump(exclude_none=True)
        if self.family == "linear":
            spec.pop("positive_groups", None)
            spec.pop("n_positive", None)
            spec.pop("bias_gap", None)
        else:
            spec.pop("coeffs", None)
            spec.pop("noise_std", None)
        return spec


class GridSpec(BaseModel):
    """Perturbation budgets; every (n_high, n_low) combination is a grid point."""
    model_config = ConfigDict(extra="forbid")

    n_high: list[int] = Field(default_factory=lambda: [20])
    n_low: list[int] = Field(default_factory=lambda: [50, 100, 150, 200])

    @field_validator("n_high", "n_low")
    @classmethod
    def _positive_counts(cls, value: list[int]) -> list[int]:
        if not value or any(n < 1 for n in value):
            raise ValueError("sample counts must be a nonempty list of positive integers")
        return value

    def points(self) -> list[tuple[int, int]]:
        return [(nh, nl) for nh in self.n_high for nl in self.n_low]


class SolverSpec(BaseModel):
    """ADMM and ridge hyperparameters."""
    model_config = ConfigDict(extra="forbid")

    lambda_high: float = Field(default=SOLVER_CONFIG.lambda_high, ge=0.0)
    lambda_low: float = Field(default=SOLVER_CONFIG.lambda_low, ge=0.0)
    mu1: float = Field(default=SOLVER_CONFIG.mu1, gt=0.0)
    mu2: float = Field(default=SOLVER_CONFIG.mu2, gt=0.0)
    eps1: float = Field(default=SOLVER_CONFIG.eps1, gt=0.0)
    eps2: float = Field(default=SOLVER_CONFIG.eps2, gt=0.0)
    max_iters: int = Field(default=SOLVER_CONFIG.max_iters, ge=1)
    adaptive_penalty: bool = SOLVER_CONFIG.adaptive_penalty
    adapt_until: int = Field(default=SOLVER_CONFIG.adapt_until, ge=0)

    def to_solver_config(self) -> SolverConfig:
        return SolverConfig(**self.model_dump())


class ExperimentConfig(BaseModel):
    """Config for `run`: oracle family, budgets, methods, solver and output."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    oracle: OracleSpec = Field(default_factory=OracleSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    methods: list[MethodName] = Field(default_factory=lambda: list(METHODS))
    solver: SolverSpec = Field(default_factory=SolverSpec)
    weight_kind: str = BENCH_DEFAULTS.weight_kind
    output_dir: Optional[str] = None
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    n_samples: int = Field(default=5, ge=1)
    tune: bool = Field(default=False, alias="validate")
    n_validation: int = Field(default=3, ge=1)
    save_traces: bool = False
    workers: int = Field(default=1, ge=1)

    @field_validator("weight_kind")
    @classmethod
    def _known_kernel(cls, value: str) -> str:
        return WeightSpec.parse(value).kind.value

    @field_validator("methods")
    @classmethod
    def _unique_methods(cls, value: list[str]) -> list[str]:
        if not value:
            raise ValueError("at least one method is required")
        return [m for m in METHODS if m in value]

    @field_validator("seeds")
    @classmethod
    def _nonempty_seeds(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("at least one seed is required")
        return value


class ScalingConfig(BaseModel):
    """Config for `scale`: wall time against one swept budget at fixed dims."""
    model_config = ConfigDict(extra="forbid")

    oracle: OracleSpec = Field(
        default_factory=lambda: OracleSpec(
            family="linear",
            group_sizes=list(SCALING_DEFAULTS.group_sizes),
            coeffs="uniform",
            noise_std=0.05,
        )
    )
    sweep: Literal["n_low", "n_high"] = "n_low"
    values: list[int] = Field(default_factory=lambda: list(SCALING_DEFAULTS.n_low))
    n_high: int = Field(default=SCALING_DEFAULTS.n_high, ge=1)
    n_low: int = Field(default=SCALING_DEFAULTS.n_low[0], ge=1)
    repeats: int = Field(default=SCALING_DEFAULTS.repeats, ge=1)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    weight_kind: str = BENCH_DEFAULTS.weight_kind
    output_dir: Optional[str] = None
    seed: int = BENCH_DEFAULTS.random_seed

    @field_validator("values")
    @classmethod
    def _positive_values(cls, value: list[int]) -> list[int]:
        if not value or any(n < 1 for n in value):
            raise ValueError("swept sizes must be a nonempty list of positive integers")
        return value

    @field_validator("weight_kind")
    @classmethod
    def _known_kernel(cls, value: str) -> str:
        return WeightSpec.parse(value).kind.value


def _first_error(error: ValidationError) -> ConfigValidationError:
    detail = error.errors()[0]
    location = ".".join(str(part) for part in detail.get("loc", ())) or "<root>"
    return ConfigValidationError(location, detail.get("msg", "invalid value"))


def _read_json(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigValidationError("config_path", f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigValidationError("config_path", f"invalid JSON at line {e.lineno}: {e.msg}")


def parse_experiment_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise _first_error(e)


def parse_scaling_config(data: dict) -> ScalingConfig:
    try:
        return ScalingConfig.model_validate(data)
    except ValidationError as e:
        raise _first_error(e)


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read and validate an experiment config; errors name the offending field."""
    return parse_experiment_config(_read_json(path))


def load_scaling_config(path: Path) -> ScalingConfig:
    return parse_scaling_config(_read_json(path))
