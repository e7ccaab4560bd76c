"""
Sample-weight kernels for the diagonal weight matrices W_H and W_L.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.metrics.pairwise import cosine_similarity

from app.attribution.exceptions import ConfigValidationError, SingularWeightError


class WeightKind(str, Enum):
    COSINE = "cosine"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class WeightSpec:
    """Kernel choice for perturbation sample weights."""
    kind: WeightKind = WeightKind.COSINE

    @classmethod
    def parse(cls, value: "str | WeightSpec") -> "WeightSpec":
        if isinstance(value, WeightSpec):
            return value
        try:
            return cls(WeightKind(str(value).lower()))
        except ValueError:
            known = ", ".join(k.value for k in WeightKind)
            raise ConfigValidationError("weight_kind", f"'{value}' is not one of: {known}")


def weigh(masks: np.ndarray, spec: WeightSpec) -> np.ndarray:
    """
    Per-row sample weights.

    cosine: similarity between each mask row and the all-ones (unperturbed)
    row, which equals sqrt(k_n / K) for k_n present features out of K.
    uniform: all ones.

    Raises:
        SingularWeightError: if any row is all zeros
    """
    masks = np.asarray(masks, dtype=float)
    if masks.ndim != 2:
        raise ConfigValidationError("masks", f"expected a 2-D mask matrix, got {masks.ndim}-D")

    empty_rows = np.flatnonzero(~masks.any(axis=1))
    if empty_rows.size:
        raise SingularWeightError(empty_rows.tolist())

    if spec.kind is WeightKind.UNIFORM:
        return np.ones(masks.shape[0])

    reference = np.ones((1, masks.shape[1]))
    return cosine_similarity(masks, reference).ravel()
