"""
Wall-Time Scaling
Times C2FA and separate LIME against a swept perturbation budget at fixed
dimensions. Oracle time and call counts are reported apart from solver time.
"""
import time
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

from app.attribution.bench.oracles import build_oracle
from app.attribution.core.nested import NestedShape, build_aggregation_matrix
from app.attribution.exceptions import ConvergenceError
from app.attribution.experiment.schema import ScalingConfig, load_scaling_config
from app.attribution.experiment.writers import write_scaling
from app.attribution.logging_utils import get_experiment_logger
from app.attribution.perturbation.kernels import WeightSpec
from app.attribution.perturbation.sampling import CountingOracle, perturb
from app.attribution.solvers.consistent import solve_c2fa
from app.attribution.solvers.separate import solve_separate

logger = get_experiment_logger()

SCALING_COLUMNS = [
    "n_high",
    "n_low",
    "c2fa_seconds",
    "lime_seconds",
    "oracle_seconds",
    "oracle_calls",
    "c2fa_iterations",
    "converged",
]


def _time_point(config: ScalingConfig, n_high: int, n_low: int, repeat: int) -> dict:
    """One timed run: shared sampling, then each solver on the same sets."""
    shape = NestedShape(tuple(config.oracle.group_sizes))
    oracle = CountingOracle(build_oracle(config.oracle.to_oracle_spec(), seed=config.seed + repeat))
    weight_spec = WeightSpec.parse(config.weight_kind)
    cfg = config.solver.to_solver_config()
    m = build_aggregation_matrix(shape)

    start = time.perf_counter()
    high, low = perturb(shape, oracle, n_high, n_low, weight_spec, config.seed + repeat)
    sampling = time.perf_counter() - start - oracle.elapsed

    start = time.perf_counter()
    converged, iterations = True, cfg.max_iters
    try:
        pair, _ = solve_c2fa(high, low, m, cfg)
        iterations = pair.meta["iterations"]
    except ConvergenceError:
        converged = False
    c2fa = time.perf_counter() - start

    start = time.perf_counter()
    solve_separate(high, low, cfg.lambda_high, cfg.lambda_low)
    lime = time.perf_counter() - start

    return {
        "n_high": n_high,
        "n_low": n_low,
        "c2fa_seconds": sampling + c2fa,
        "lime_seconds": sampling + lime,
        "oracle_seconds": oracle.elapsed,
        "oracle_calls": oracle.total_calls,
        "c2fa_iterations": iterations,
        "converged": int(converged),
    }


def linear_fit(sizes: np.ndarray, seconds: np.ndarray) -> Optional[dict]:
    """Least-squares line seconds ~ a + b * size with its R^2; None for a single point."""
    if np.unique(sizes).size < 2:
        return None
    x = np.asarray(sizes, dtype=float).reshape(-1, 1)
    y = np.asarray(seconds, dtype=float)
    model = LinearRegression().fit(x, y)
    return {
        "slope": float(model.coef_[0]),
        "intercept": float(model.intercept_),
        "r2": float(model.score(x, y)),
    }


def measure_scaling(config: ScalingConfig) -> tuple[pd.DataFrame, dict]:
    """Median timings over repeats per swept size, plus the linear fit."""
    rows = []
    for value in config.values:
        n_high = value if config.sweep == "n_high" else config.n_high
        n_low = value if config.sweep == "n_low" else config.n_low
        runs = pd.DataFrame([_time_point(config, n_high, n_low, r) for r in range(config.repeats)])
        row = runs.median(numeric_only=True).to_dict()
        row.update(
            n_high=n_high,
            n_low=n_low,
            oracle_calls=int(runs["oracle_calls"].iloc[0]),
            converged=int(runs["converged"].min()),
        )
        rows.append(row)
        logger.info("scaling_point", n_high=n_high, n_low=n_low, c2fa_seconds=row["c2fa_seconds"])

    frame = pd.DataFrame(rows)[SCALING_COLUMNS]
    frame["n_high"] = frame["n_high"].astype(int)
    frame["n_low"] = frame["n_low"].astype(int)
    frame["c2fa_iterations"] = frame["c2fa_iterations"].round().astype(int)

    sizes = frame[config.sweep].to_numpy()
    fit = {
        "sweep": config.sweep,
        "c2fa": linear_fit(sizes, frame["c2fa_seconds"].to_numpy()),
        "lime": linear_fit(sizes, frame["lime_seconds"].to_numpy()),
    }
    if fit["c2fa"] is None:
        logger.info("scaling_fit_skipped", points=len(frame))
    return frame, fit


def run_scaling(
    config_path: Path,
    out_dir: Optional[Path] = None,
    default_output_dir: Optional[Path] = None,
) -> int:
    """Write scaling.csv and scaling_fit.json for a scaling config; returns 0."""
    config = load_scaling_config(Path(config_path))
    output_dir = out_dir or (Path(config.output_dir) if config.output_dir else None) or default_output_dir
    if output_dir is None:
        output_dir = Path("results")

    frame, fit = measure_scaling(config)
    write_scaling(frame, fit, Path(output_dir))
    if fit["c2fa"] is not None:
        logger.info("scaling_fit", sweep=config.sweep, r2=fit["c2fa"]["r2"], slope=fit["c2fa"]["slope"])
    return 0
