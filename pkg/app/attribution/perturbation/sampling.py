"""
Perturbation Sampling Module
Binary simplified inputs, the black-box oracle interface, and collection of
model outputs for the high and low levels.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

import numpy as np
import pandas as pd

from app.attribution.core.nested import NestedShape
from app.attribution.exceptions import OracleEvaluationError, ShapeError
from app.attribution.logging_utils import get_perturbation_logger
from app.attribution.perturbation.kernels import WeightSpec, weigh

logger = get_perturbation_logger()


class Level(str, Enum):
    HIGH = "high"
    LOW = "low"


@runtime_checkable
class BlackBoxOracle(Protocol):
    """
    Scalar black-box model seen through binary masks.

    Implementations compose the masking functions and target-class selection
    internally and return a score in [0, 1]. `shareable` declares whether rows
    may be evaluated from several threads.
    """
    shape: NestedShape
    shareable: bool

    def evaluate_high(self, mask: np.ndarray) -> float: ...

    def evaluate_low(self, mask: np.ndarray) -> float: ...


class BaseOracle:
    """Oracle base with row-wise batch forms."""
    shape: NestedShape
    shareable: bool = True

    def evaluate_high(self, mask: np.ndarray) -> float:
        raise NotImplementedError

    def evaluate_low(self, mask: np.ndarray) -> float:
        raise NotImplementedError

    def evaluate_high_batch(self, masks: np.ndarray) -> np.ndarray:
        return np.array([self.evaluate_high(row) for row in masks], dtype=float)

    def evaluate_low_batch(self, masks: np.ndarray) -> np.ndarray:
        return np.array([self.evaluate_low(row) for row in masks], dtype=float)


class CountingOracle(BaseOracle):
    """Wraps an oracle, counting evaluations per level and the time spent in them."""

    def __init__(self, inner: BlackBoxOracle):
        self.inner = inner
        self.shape = inner.shape
        self.shareable = False
        self.calls = {Level.HIGH: 0, Level.LOW: 0}
        self.elapsed = 0.0

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    def evaluate_high(self, mask: np.ndarray) -> float:
        self.calls[Level.HIGH] += 1
        start = time.perf_counter()
        try:
            return self.inner.evaluate_high(mask)
        finally:
            self.elapsed += time.perf_counter() - start

    def evaluate_low(self, mask: np.ndarray) -> float:
        self.calls[Level.LOW] += 1
        start = time.perf_counter()
        try:
            return self.inner.evaluate_low(mask)
        finally:
            self.elapsed += time.perf_counter() - start


@dataclass(frozen=True, eq=False)
class PerturbationSet:
    """Masks, black-box outputs and sample weights for one level."""
    masks: np.ndarray
    outputs: np.ndarray
    level: Level
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        n_rows = self.masks.shape[0]
        if self.outputs.shape != (n_rows,):
            raise ShapeError(f"{n_rows} mask rows but {self.outputs.shape[0]} outputs")
        if self.weights is not None:
            if self.weights.shape != (n_rows,):
                raise ShapeError(f"{n_rows} mask rows but {self.weights.shape[0]} weights")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
                raise ShapeError("weights must be finite and non-negative")

    @property
    def n_rows(self) -> int:
        return self.masks.shape[0]

    @property
    def width(self) -> int:
        return self.masks.shape[1]

    def with_weights(self, spec: WeightSpec) -> "PerturbationSet":
        return replace(self, weights=weigh(self.masks, spec))

    def require_weights(self) -> np.ndarray:
        if self.weights is None:
            raise ShapeError(f"{self.level.value}-level perturbation set has no weights")
        return self.weights


def sample_masks(n: int, width: int, seed: int) -> np.ndarray:
    """
    Draw an n x width binary matrix with i.i.d. Bernoulli(0.5) entries.

    All-zero rows are redrawn until every row has at least one present feature.
    """
    if n < 1 or width < 1:
        raise ShapeError(f"mask matrix needs n >= 1 and width >= 1, got {n} x {width}")

    rng = np.random.default_rng(seed)
    masks = rng.integers(0, 2, size=(n, width), dtype=np.int8)
    empty = ~masks.any(axis=1)
    while empty.any():
        masks[empty] = rng.integers(0, 2, size=(int(empty.sum()), width), dtype=np.int8)
        empty = ~masks.any(axis=1)
    return masks


def _level_width(shape: NestedShape, level: Level) -> int:
    return shape.n_groups if level is Level.HIGH else shape.d_total


def collect(
    oracle: BlackBoxOracle,
    masks: np.ndarray,
    level: Level | str,
    batch: bool = False,
    max_workers: int = 1,
) -> PerturbationSet:
    """
    Query the oracle for every mask row, preserving row order.

    Args:
        oracle: Black-box oracle
        masks: Binary mask matrix (N x J for high, N x D-dagger for low)
        level: "high" or "low"
        batch: Use the oracle's batch form when it has one
        max_workers: Threads for row evaluation (shareable oracles only)

    Returns:
        PerturbationSet without weights

    Raises:
        OracleEvaluationError: naming the failing row
    """
    level = Level(level)
    masks = np.asarray(masks)
    expected = _level_width(oracle.shape, level)
    if masks.ndim != 2 or masks.shape[1] != expected:
        raise ShapeError(
            f"{level.value}-level masks must have width {expected}, got {masks.shape}"
        )

    evaluate = oracle.evaluate_high if level is Level.HIGH else oracle.evaluate_low
    batch_fn = getattr(oracle, f"evaluate_{level.value}_batch", None)

    def _evaluate(row_index: int) -> float:
        try:
            return float(evaluate(masks[row_index]))
        except Exception as e:
            raise OracleEvaluationError(row=row_index, level=level.value, reason=str(e))

    rows = range(masks.shape[0])
    if batch and batch_fn is not None:
        try:
            outputs = np.asarray(batch_fn(masks), dtype=float)
        except Exception as e:
            # Replay row by row to locate the failing mask
            logger.warning("batch_evaluation_failed", level=level.value, reason=str(e))
            for i in rows:
                _evaluate(i)
            raise OracleEvaluationError(row=-1, level=level.value, reason=str(e))
        return PerturbationSet(masks=masks, outputs=outputs, level=level)

    if max_workers > 1 and getattr(oracle, "shareable", False):
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            outputs = np.fromiter(executor.map(_evaluate, rows), dtype=float, count=len(rows))
    else:
        outputs = np.fromiter((_evaluate(i) for i in rows), dtype=float, count=len(rows))

    return PerturbationSet(masks=masks, outputs=outputs, level=level)


def perturb(
    shape: NestedShape,
    oracle: BlackBoxOracle,
    n_high: int,
    n_low: int,
    weight_spec: WeightSpec,
    seed: int,
) -> tuple[PerturbationSet, PerturbationSet]:
    """
    Sample, query and weigh both levels.

    Both levels draw from the same seed so that single-feature shapes give
    identical high and low problems.
    """
    if oracle.shape != shape:
        raise ShapeError(f"oracle shape {oracle.shape} != requested shape {shape}")

    high = collect(oracle, sample_masks(n_high, shape.n_groups, seed), Level.HIGH)
    low = collect(oracle, sample_masks(n_low, shape.d_total, seed), Level.LOW)

    logger.debug(
        "perturbations_collected",
        n_high=n_high,
        n_low=n_low,
        groups=shape.n_groups,
        low_features=shape.d_total,
    )
    return high.with_weights(weight_spec), low.with_weights(weight_spec)


def save_masks_csv(masks: np.ndarray, path: Path) -> Path:
    """Write a 0/1 mask matrix to CSV for auditing."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.asarray(masks, dtype=int))
    frame.columns = [f"z{i}" for i in range(frame.shape[1])]
    frame.to_csv(path, index=False)
    return path


def load_masks_csv(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"Mask file not found: {path}")
    return pd.read_csv(path).to_numpy(dtype=np.int8)
