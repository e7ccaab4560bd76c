"""
Experiment artifact writers: results.csv, aggregate.json, curves/*.csv,
trace/*.csv, scaling.csv and scaling_fit.json.
"""
import json
import math
from pathlib import Path
from typing import Any

import pandas as pd

RESULT_COLUMNS = ["method", "n_high", "n_low", "seed", "sample_id", "metric", "value"]
CELL_KEYS = ["method", "n_high", "n_low"]
FLOAT_FORMAT = "%.10g"


def _clean(value: Any) -> Any:
    """JSON-safe scalars: NaN and infinities become null."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def write_json(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sort_results(frame: pd.DataFrame) -> pd.DataFrame:
    """Canonical row order so the file never depends on completion order."""
    return (
        frame[RESULT_COLUMNS]
        .sort_values(["n_high", "n_low", "method", "seed", "sample_id", "metric"], kind="mergesort")
        .reset_index(drop=True)
    )


def write_results_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    sort_results(frame).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def cell_summary(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and standard deviation per (method, grid point, metric).

    Samples are averaged within each seed first; mean and stdev are then taken
    over the per-seed means.
    """
    per_seed = (
        frame.groupby(CELL_KEYS + ["metric", "seed"], sort=True)["value"]
        .mean()
        .reset_index()
    )
    summary = (
        per_seed.groupby(CELL_KEYS + ["metric"], sort=True)["value"]
        .agg(mean="mean", std=lambda s: float(s.std(ddof=1)) if s.count() > 1 else 0.0, n_seeds="count")
        .reset_index()
    )
    return summary


def build_aggregate(frame: pd.DataFrame, config: dict, selected: dict | None) -> dict:
    summary = cell_summary(frame)
    cells = []
    for (method, n_high, n_low), group in summary.groupby(CELL_KEYS, sort=True):
        cells.append({
            "method": method,
            "n_high": int(n_high),
            "n_low": int(n_low),
            "metrics": {
                row.metric: {"mean": float(row.mean), "std": float(row.std), "n_seeds": int(row.n_seeds)}
                for row in group.itertuples(index=False)
            },
        })
    return {"config": config, "selected_hyperparameters": selected, "cells": cells}


def write_curves(frame: pd.DataFrame, directory: Path) -> list[Path]:
    """One CSV per metric: rows are grid points, columns are method means and stdevs."""
    directory.mkdir(parents=True, exist_ok=True)
    summary = cell_summary(frame)
    paths = []
    for metric, group in summary.groupby("metric", sort=True):
        wide = group.pivot_table(index=["n_high", "n_low"], columns="method", values=["mean", "std"])
        wide.columns = [f"{method}_{stat}" for stat, method in wide.columns]
        wide = wide[sorted(wide.columns)].reset_index()
        path = directory / f"{metric}.csv"
        wide.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        paths.append(path)
    return paths


def write_scaling(frame: pd.DataFrame, fit: dict, directory: Path) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "scaling.csv"
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return csv_path, write_json(fit, directory / "scaling_fit.json")
