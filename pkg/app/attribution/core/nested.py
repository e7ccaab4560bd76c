"""
Nested Input Structure
Domain types for two-level (high/low) features, attribution pairs and the
aggregation matrix that sums low-level attributions per high-level feature.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from app.attribution.exceptions import ShapeError


@dataclass(frozen=True)
class NestedShape:
    """Group sizes D_1..D_J of an input's high-level features."""
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(d) for d in self.group_sizes)
        if len(sizes) < 1:
            raise ShapeError("a nested shape needs at least one high-level feature")
        if any(d < 1 for d in sizes):
            raise ShapeError(f"every group size must be >= 1, got {list(sizes)}")
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def n_groups(self) -> int:
        """J: number of high-level features."""
        return len(self.group_sizes)

    @property
    def d_total(self) -> int:
        """D-dagger: total number of low-level features."""
        return sum(self.group_sizes)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start index of each group's block (length J + 1)."""
        return np.concatenate([[0], np.cumsum(self.group_sizes)])

    @cached_property
    def group_of_feature(self) -> np.ndarray:
        """Group index of every low-level feature (length D-dagger)."""
        return np.repeat(np.arange(self.n_groups), self.group_sizes)

    def group_slices(self) -> list[slice]:
        return [slice(int(a), int(b)) for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def expand_high_mask(self, high_mask: np.ndarray) -> np.ndarray:
        """Group-expanded low-level mask: a present group keeps its whole block."""
        high_mask = np.asarray(high_mask)
        if high_mask.shape[-1] != self.n_groups:
            raise ShapeError(
                f"high-level mask width {high_mask.shape[-1]} != J={self.n_groups}"
            )
        return np.repeat(high_mask, self.group_sizes, axis=-1)

    def to_dict(self) -> dict:
        return {"group_sizes": list(self.group_sizes)}

    @classmethod
    def from_dict(cls, data: dict) -> "NestedShape":
        if "group_sizes" not in data:
            raise ShapeError("missing 'group_sizes'")
        return cls(tuple(data["group_sizes"]))


@dataclass(frozen=True, eq=False)
class AggregationMatrix:
    """Binary J x D-dagger matrix M with M[j, d] = 1 iff low feature d belongs to group j."""
    shape: NestedShape
    entries: np.ndarray

    def aggregate(self, lofa: np.ndarray) -> np.ndarray:
        """Per-group sums M @ lofa."""
        lofa = np.asarray(lofa, dtype=float)
        if lofa.shape != (self.shape.d_total,):
            raise ShapeError(
                f"LoFA length {lofa.shape} does not match D-dagger={self.shape.d_total}"
            )
        return self.entries @ lofa


def build_aggregation_matrix(shape: NestedShape) -> AggregationMatrix:
    """
    Build M for a nested shape.

    Low-level features are laid out in contiguous blocks in group order, so
    row j holds D_j ones in columns offsets[j]:offsets[j+1].
    """
    entries = np.zeros((shape.n_groups, shape.d_total), dtype=float)
    entries[shape.group_of_feature, np.arange(shape.d_total)] = 1.0
    entries.setflags(write=False)
    return AggregationMatrix(shape=shape, entries=entries)


@dataclass(frozen=True, eq=False)
class AttributionPair:
    """HiFA vector alpha (length J) and LoFA vector beta-dagger (length D-dagger)."""
    hifa: np.ndarray
    lofa: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        hifa = np.asarray(self.hifa, dtype=float).reshape(-1)
        lofa = np.asarray(self.lofa, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(hifa)) and np.all(np.isfinite(lofa))):
            raise ShapeError("attributions must be finite")
        object.__setattr__(self, "hifa", hifa)
        object.__setattr__(self, "lofa", lofa)

    def is_consistent(self, m: AggregationMatrix, tol: float = 1e-4) -> bool:
        return consistency_residual(self, m) <= tol

    def to_dict(self) -> dict:
        return {"hifa": self.hifa.tolist(), "lofa": self.lofa.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "AttributionPair":
        return cls(hifa=np.asarray(data["hifa"]), lofa=np.asarray(data["lofa"]))


def consistency_residual(pair: AttributionPair, m: AggregationMatrix) -> float:
    """Squared Euclidean norm of alpha - M beta-dagger."""
    if pair.hifa.shape != (m.shape.n_groups,):
        raise ShapeError(
            f"HiFA length {pair.hifa.shape[0]} does not match J={m.shape.n_groups}"
        )
    residual = pair.hifa - m.aggregate(pair.lofa)
    return float(residual @ residual)

