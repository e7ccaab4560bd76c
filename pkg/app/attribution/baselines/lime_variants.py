"""
Bottom-up and top-down LIME variants.
Both derive one level from the other and are consistent by construction.
"""
import numpy as np

from app.attribution.core.nested import AggregationMatrix, AttributionPair, NestedShape
from app.attribution.exceptions import ShapeError


def bu_lime(lofa: np.ndarray, m: AggregationMatrix) -> AttributionPair:
    """HiFAs as per-group sums of the given LoFAs."""
    lofa = np.asarray(lofa, dtype=float)
    return AttributionPair(hifa=m.aggregate(lofa), lofa=lofa, meta={"method": "bu_lime"})


def td_lime(hifa: np.ndarray, shape: NestedShape, seed: int) -> AttributionPair:
    """
    LoFAs drawn around the given HiFAs.

    For each group j, D_j values are drawn from Normal(alpha_j, 1 / D_j) and
    one uniformly chosen entry is overwritten so the group sums to alpha_j.
    """
    hifa = np.asarray(hifa, dtype=float)
    if hifa.shape != (shape.n_groups,):
        raise ShapeError(f"HiFA length {hifa.shape} does not match J={shape.n_groups}")

    rng = np.random.default_rng(seed)
    lofa = np.empty(shape.d_total)
    for j, block in enumerate(shape.group_slices()):
        size = shape.group_sizes[j]
        values = rng.normal(loc=hifa[j], scale=1.0 / size, size=size)
        pick = int(rng.integers(size))
        values[pick] = hifa[j] - (values.sum() - values[pick])
        lofa[block] = values

    return AttributionPair(hifa=hifa, lofa=lofa, meta={"method": "td_lime"})
