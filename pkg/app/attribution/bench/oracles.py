"""
Synthetic Black-Box Oracles
Models with known ground truth for desk-scale benchmarking:
- LinearSetOracle: additive model, exactly consistent across levels
- MilMaxOracle: max-pooled group evidence (bag positive iff some instance is)
"""
import math
from typing import Any, Optional, Sequence

import numpy as np

from app.attribution.config import BENCH_DEFAULTS
from app.attribution.core.nested import AttributionPair, NestedShape, build_aggregation_matrix
from app.attribution.exceptions import OracleConstructionError, ShapeError
from app.attribution.logging_utils import get_bench_logger
from app.attribution.perturbation.sampling import BaseOracle

logger = get_bench_logger()

FAMILIES = ("linear", "mil")


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent generators derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _check_mask(mask: np.ndarray, width: int, level: str) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape[-1] != width:
        raise ShapeError(f"{level}-level mask width {mask.shape[-1]} != {width}")
    return mask


class LinearSetOracle(BaseOracle):
    """
    f(z_L) = clip(c^T z_L + noise, 0, 1); high-level masks act through the
    group-expanded low-level mask.

    Noise is seeded by the oracle seed and the mask bits, so a repeated
    mask always gets the same output whatever the query order.
    """

    def __init__(self, shape: NestedShape, coeffs: np.ndarray, noise_std: float = 0.0, seed: int = 0):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (shape.d_total,):
            raise OracleConstructionError(
                f"expected {shape.d_total} coefficients, got {coeffs.size}"
            )
        if noise_std < 0:
            raise OracleConstructionError("noise_std must be >= 0")
        self.shape = shape
        self.coeffs = coeffs
        self.noise_std = float(noise_std)
        self.seed = seed
        self.shareable = True

    def evaluate_low(self, mask: np.ndarray) -> float:
        mask = _check_mask(mask, self.shape.d_total, "low")
        value = float((self.coeffs * mask).sum())
        if self.noise_std > 0:
            value += self._mask_noise(mask)
        return float(np.clip(value, 0.0, 1.0))

    def _mask_noise(self, mask: np.ndarray) -> float:
        bits = np.asarray(mask, dtype=int).ravel().tolist()
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, *bits]))
        return float(rng.normal(0.0, self.noise_std))

    def evaluate_high(self, mask: np.ndarray) -> float:
        mask = _check_mask(mask, self.shape.n_groups, "high")
        return self.evaluate_low(self.shape.expand_high_mask(mask))

    def ground_truth(self) -> AttributionPair:
        m = build_aggregation_matrix(self.shape)
        return AttributionPair(hifa=m.aggregate(self.coeffs), lofa=self.coeffs.copy())

    def instance_labels(self) -> np.ndarray:
        hifa = self.ground_truth().hifa
        return (hifa >= hifa.mean()).astype(int)

    def low_labels(self) -> np.ndarray:
        return (self.coeffs >= self.coeffs.mean()).astype(int)

    def to_spec(self) -> dict:
        return {
            "family": "linear",
            "group_sizes": list(self.shape.group_sizes),
            "coeffs": self.coeffs.tolist(),
            "noise_std": self.noise_std,
            "seed": self.seed,
        }


class MilMaxOracle(BaseOracle):
    """
    Multiple-instance oracle.

    Group evidence g_j = sum_d e_jd z_jd; score = sigmoid(a (max_j g_j - t)).
    High-level masking additionally subtracts bias_gap * (masked groups / J)
    before clamping to [0, 1].
    """
    shareable = True

    def __init__(
        self,
        shape: NestedShape,
        evidence: np.ndarray,
        positive_groups: Sequence[int],
        positive_features: np.ndarray,
        bias_gap: float = BENCH_DEFAULTS.bias_gap,
        steepness: float = BENCH_DEFAULTS.mil_steepness,
        threshold: float = BENCH_DEFAULTS.mil_threshold,
        seed: int = 0,
    ):
        evidence = np.asarray(evidence, dtype=float)
        if evidence.shape != (shape.d_total,) or np.any(evidence < 0):
            raise OracleConstructionError(
                f"evidence must be {shape.d_total} non-negative weights"
            )
        if not 0.0 <= bias_gap <= 1.0:
            raise OracleConstructionError(f"bias_gap must lie in [0, 1], got {bias_gap}")
        self.shape = shape
        self.evidence = evidence
        self.positive_groups = tuple(sorted(int(j) for j in positive_groups))
        self.positive_features = np.asarray(positive_features, dtype=bool)
        self.bias_gap = float(bias_gap)
        self.steepness = float(steepness)
        self.threshold = float(threshold)
        self.seed = seed

    def _score(self, low_masks: np.ndarray) -> np.ndarray:
        contributions = low_masks * self.evidence
        group_evidence = np.add.reduceat(contributions, self.shape.offsets[:-1], axis=-1)
        peak = group_evidence.max(axis=-1)
        return 1.0 / (1.0 + np.exp(-self.steepness * (peak - self.threshold)))

    def evaluate_low_batch(self, masks: np.ndarray) -> np.ndarray:
        masks = _check_mask(np.atleast_2d(masks), self.shape.d_total, "low")
        return self._score(masks.astype(float))

    def evaluate_high_batch(self, masks: np.ndarray) -> np.ndarray:
        masks = _check_mask(np.atleast_2d(masks), self.shape.n_groups, "high")
        scores = self._score(self.shape.expand_high_mask(masks).astype(float))
        masked_share = (self.shape.n_groups - masks.sum(axis=-1)) / self.shape.n_groups
        return np.clip(scores - self.bias_gap * masked_share, 0.0, 1.0)

    def evaluate_low(self, mask: np.ndarray) -> float:
        return float(self.evaluate_low_batch(mask)[0])

    def evaluate_high(self, mask: np.ndarray) -> float:
        return float(self.evaluate_high_batch(mask)[0])

    def instance_labels(self) -> np.ndarray:
        labels = np.zeros(self.shape.n_groups, dtype=int)
        labels[list(self.positive_groups)] = 1
        return labels

    def low_labels(self) -> np.ndarray:
        return self.positive_features.astype(int)

    def to_spec(self) -> dict:
        return {
            "family": "mil",
            "group_sizes": list(self.shape.group_sizes),
            "positive_groups": list(self.positive_groups),
            "bias_gap": self.bias_gap,
            "steepness": self.steepness,
            "threshold": self.threshold,
            "seed": self.seed,
        }


def make_linear_oracle(
    shape: NestedShape,
    coeff_spec: "str | Sequence[float]" = "random",
    noise_std: float = 0.0,
    seed: int = 0,
    total: float = BENCH_DEFAULTS.linear_total,
) -> LinearSetOracle:
    """
    Build a linear oracle.

    Args:
        shape: Nested shape
        coeff_spec: Explicit coefficients, "uniform" (equal shares of total)
            or "random" (Dirichlet shares of total)
        noise_std: Gaussian noise standard deviation (pre-clamp)
        seed: Seed for random coefficients and noise

    Raises:
        OracleConstructionError: if the full-mask output falls outside [0, 1]
    """
    if isinstance(coeff_spec, str):
        if coeff_spec == "uniform":
            coeffs = np.full(shape.d_total, total / shape.d_total)
        elif coeff_spec == "random":
            coeffs = total * _streams(seed, 2)[0].dirichlet(np.ones(shape.d_total))
        else:
            raise OracleConstructionError(f"unknown coefficient spec '{coeff_spec}'")
    else:
        coeffs = np.asarray(coeff_spec, dtype=float)

    full = float(coeffs.sum()) if coeffs.ndim == 1 else float("nan")
    if not 0.0 <= full <= 1.0 + 1e-12:
        raise OracleConstructionError(f"full-mask output {full} is outside [0, 1]")

    return LinearSetOracle(shape, coeffs, noise_std=noise_std, seed=seed)


def make_mil_oracle(
    shape: NestedShape,
    positive_groups: Sequence[int],
    bias_gap: float = BENCH_DEFAULTS.bias_gap,
    seed: int = 0,
    steepness: float = BENCH_DEFAULTS.mil_steepness,
    threshold: float = BENCH_DEFAULTS.mil_threshold,
) -> MilMaxOracle:
    """
    Build a MIL oracle with the given positive groups.

    In a positive group, ceil(D_j / 2) features carry evidence in [0.8, 1.6)
    and are labeled positive; the rest carry evidence in [0, 0.2). Negative
    groups carry at most 0.5 / D_j per feature, so their total stays below
    0.5 and never crosses the threshold.

    Raises:
        OracleConstructionError: if positive_groups is empty or out of range
    """
    groups = sorted(set(int(j) for j in positive_groups))
    if not groups:
        raise OracleConstructionError("positive_groups must be nonempty")
    if groups[0] < 0 or groups[-1] >= shape.n_groups:
        raise OracleConstructionError(f"positive_groups {groups} out of range for J={shape.n_groups}")

    rng = _streams(seed, 2)[1]
    evidence = np.empty(shape.d_total)
    positive_features = np.zeros(shape.d_total, dtype=bool)
    for j, block in enumerate(shape.group_slices()):
        size = shape.group_sizes[j]
        if j in groups:
            hot = rng.choice(size, size=math.ceil(size / 2), replace=False)
            values = rng.uniform(0.0, 0.2, size=size)
            values[hot] = rng.uniform(0.8, 1.6, size=hot.size)
            flags = np.zeros(size, dtype=bool)
            flags[hot] = True
            evidence[block] = values
            positive_features[block] = flags
        else:
            evidence[block] = rng.uniform(0.0, 0.5 / size, size=size)

    positive_features &= evidence > BENCH_DEFAULTS.mil_low_label_threshold
    return MilMaxOracle(
        shape,
        evidence,
        groups,
        positive_features,
        bias_gap=bias_gap,
        steepness=steepness,
        threshold=threshold,
        seed=seed,
    )


def build_oracle(spec: dict[str, Any], seed: Optional[int] = None) -> "LinearSetOracle | MilMaxOracle":
    """
    Build an oracle from a JSON-style spec.

    linear: {"family": "linear", "group_sizes": [...], "coeffs": "random" | "uniform" | [...],
             "noise_std": 0.0}
    mil:    {"family": "mil", "group_sizes": [...], "positive_groups": [...] (or "n_positive": k),
             "bias_gap": 0.2}

    `seed` overrides spec["seed"].
    """
    family = spec.get("family")
    if family not in FAMILIES:
        raise OracleConstructionError(f"unknown oracle family '{family}'")
    if seed is None:
        seed = int(spec.get("seed", BENCH_DEFAULTS.random_seed))
    shape = NestedShape(tuple(spec.get("group_sizes", BENCH_DEFAULTS.group_sizes)))

    if family == "linear":
        return make_linear_oracle(
            shape,
            coeff_spec=spec.get("coeffs", "random"),
            noise_std=float(spec.get("noise_std", 0.0)),
            seed=seed,
        )

    positive_groups = spec.get("positive_groups")
    if positive_groups is None:
        n_positive = int(spec.get("n_positive", 1))
        if not 1 <= n_positive <= shape.n_groups:
            raise OracleConstructionError(f"n_positive must lie in [1, {shape.n_groups}]")
        picker = _streams(seed, 2)[0]
        positive_groups = picker.choice(shape.n_groups, size=n_positive, replace=False).tolist()

    return make_mil_oracle(
        shape,
        positive_groups,
        bias_gap=float(spec.get("bias_gap", BENCH_DEFAULTS.bias_gap)),
        seed=seed,
        steepness=float(spec.get("steepness", BENCH_DEFAULTS.mil_steepness)),
        threshold=float(spec.get("threshold", BENCH_DEFAULTS.mil_threshold)),
    )
