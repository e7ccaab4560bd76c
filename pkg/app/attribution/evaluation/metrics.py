"""
Attribution Evaluation Metrics
Correctness (NDCG, AUROC), faithfulness (insertion/deletion), consistency and
MIHL agreement for a single explained sample, plus aggregation over samples.
"""
from dataclasses import asdict, dataclass
from typing import Iterable, Literal

import numpy as np
import pandas as pd
from sklearn.metrics import auc, roc_auc_score

from app.attribution.core.nested import (
    AttributionPair,
    NestedShape,
    build_aggregation_matrix,
    consistency_residual,
)
from app.attribution.exceptions import ShapeError, UndefinedMetricError
from app.attribution.logging_utils import get_evaluation_logger
from app.attribution.perturbation.sampling import BlackBoxOracle, Level

logger = get_evaluation_logger()

METRIC_NAMES = (
    "ndcg",
    "auroc",
    "insertion_high",
    "deletion_high",
    "insertion_low",
    "deletion_low",
    "consistency",
    "mihl_agree",
)


def _descending_order(scores: np.ndarray) -> np.ndarray:
    """Indices by score descending; ties keep the lower index first."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def ndcg(scores: np.ndarray, relevance: np.ndarray) -> float:
    """
    Normalized discounted cumulative gain with gain rel_k / log2(k + 1).

    Raises:
        UndefinedMetricError: if no item is relevant
    """
    scores = np.asarray(scores, dtype=float)
    relevance = np.asarray(relevance, dtype=float)
    if scores.shape != relevance.shape:
        raise ShapeError(f"{scores.size} scores but {relevance.size} relevance labels")
    if not np.any(relevance > 0):
        raise UndefinedMetricError("ndcg", "no relevant item")

    discounts = 1.0 / np.log2(np.arange(2, scores.size + 2))
    dcg = float(relevance[_descending_order(scores)] @ discounts)
    idcg = float(np.sort(relevance)[::-1] @ discounts)
    return dcg / idcg


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    Area under the ROC curve (ties count one half).

    Raises:
        UndefinedMetricError: if labels hold a single class
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.size} scores but {labels.size} labels")
    if np.unique(labels).size < 2:
        raise UndefinedMetricError("auroc", "labels contain a single class")
    return float(roc_auc_score(labels, scores))


def insertion_deletion(
    oracle: BlackBoxOracle,
    attributions: np.ndarray,
    level: Level | str,
    mode: Literal["insert", "delete"],
) -> float:
    """
    Trapezoidal AUC of the oracle output while features are inserted into an
    empty mask (insert) or deleted from a full mask (delete) in descending
    attribution order. The curve has K + 1 points over x in [0, 1].
    """
    level = Level(level)
    width = oracle.shape.n_groups if level is Level.HIGH else oracle.shape.d_total
    attributions = np.asarray(attributions, dtype=float)
    if attributions.shape != (width,):
        raise ShapeError(f"{level.value}-level attributions must have length {width}")
    if mode not in ("insert", "delete"):
        raise ValueError(f"unknown mode '{mode}'")

    evaluate = oracle.evaluate_high if level is Level.HIGH else oracle.evaluate_low
    mask = np.zeros(width, dtype=np.int8) if mode == "insert" else np.ones(width, dtype=np.int8)
    fill = 1 if mode == "insert" else 0

    curve = [float(evaluate(mask.copy()))]
    for feature in _descending_order(attributions):
        mask[feature] = fill
        curve.append(float(evaluate(mask.copy())))

    return float(auc(np.linspace(0.0, 1.0, width + 1), np.asarray(curve)))


def mihl_agreement(pair: AttributionPair, shape: NestedShape) -> int:
    """1 iff the top HiFA group contains the top LoFA feature (signed, lowest index on ties)."""
    if pair.hifa.shape != (shape.n_groups,) or pair.lofa.shape != (shape.d_total,):
        raise ShapeError("attribution pair does not match the nested shape")
    top_group = int(np.argmax(pair.hifa))
    top_feature = int(np.argmax(pair.lofa))
    return int(shape.group_of_feature[top_feature] == top_group)


def surrogate_fidelity(
    pair: AttributionPair,
    oracle: BlackBoxOracle,
    masks_high: np.ndarray,
    masks_low: np.ndarray,
) -> float:
    """Largest absolute gap between oracle outputs and linear surrogate predictions."""
    gaps = [0.0]
    for mask in np.asarray(masks_high):
        gaps.append(abs(oracle.evaluate_high(mask) - float(mask @ pair.hifa)))
    for mask in np.asarray(masks_low):
        gaps.append(abs(oracle.evaluate_low(mask) - float(mask @ pair.lofa)))
    return float(max(gaps))


@dataclass
class EvalReport:
    """Metrics for one explained sample; undefined correctness metrics are NaN."""
    ndcg: float
    auroc: float
    insertion_high: float
    deletion_high: float
    insertion_low: float
    deletion_low: float
    consistency: float
    mihl_agree: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_rows(self, **keys) -> list[dict]:
        """Flat rows (one per metric) carrying the given join keys."""
        return [{**keys, "metric": name, "value": value} for name, value in self.to_dict().items()]


def _or_nan(metric, *args) -> float:
    try:
        return metric(*args)
    except UndefinedMetricError as e:
        logger.debug("metric_undefined", metric=e.metric, reason=e.reason)
        return float("nan")


def evaluate_pair(
    pair: AttributionPair,
    oracle: BlackBoxOracle,
    shape: NestedShape,
    instance_labels: np.ndarray,
    low_labels: np.ndarray,
) -> EvalReport:
    """Score one pair: NDCG on HiFAs, AUROC on LoFAs, both-level insertion/deletion, consistency, MIHL."""
    m = build_aggregation_matrix(shape)
    return EvalReport(
        ndcg=_or_nan(ndcg, pair.hifa, instance_labels),
        auroc=_or_nan(auroc, pair.lofa, low_labels),
        insertion_high=insertion_deletion(oracle, pair.hifa, Level.HIGH, "insert"),
        deletion_high=insertion_deletion(oracle, pair.hifa, Level.HIGH, "delete"),
        insertion_low=insertion_deletion(oracle, pair.lofa, Level.LOW, "insert"),
        deletion_low=insertion_deletion(oracle, pair.lofa, Level.LOW, "delete"),
        consistency=consistency_residual(pair, m),
        mihl_agree=mihl_agreement(pair, shape),
    )


def aggregate_reports(reports: Iterable[EvalReport]) -> pd.DataFrame:
    """Per-metric mean and standard deviation over samples (NaN values skipped)."""
    frame = pd.DataFrame([r.to_dict() for r in reports], columns=list(METRIC_NAMES))
    if frame.empty:
        return pd.DataFrame(columns=["mean", "std"])
    return pd.DataFrame({"mean": frame.mean(), "std": frame.std(ddof=0)})
