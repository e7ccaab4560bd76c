"""
Experiment Runner
Runs every configured method over the (N_H, N_L) grid, seeds and synthetic
samples, scores each explanation and writes the artifacts.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from app.attribution.baselines.lime_variants import bu_lime, td_lime
from app.attribution.config import LAMBDA_GRID, MU2_GRID, SolverConfig
from app.attribution.core.nested import AttributionPair, NestedShape, build_aggregation_matrix
from app.attribution.bench.oracles import build_oracle
from app.attribution.evaluation.metrics import EvalReport, evaluate_pair
from app.attribution.exceptions import ConvergenceError
from app.attribution.experiment.schema import ExperimentConfig, load_experiment_config
from app.attribution.experiment.writers import build_aggregate, write_curves, write_json, write_results_csv
from app.attribution.logging_utils import get_experiment_logger
from app.attribution.perturbation.kernels import WeightSpec
from app.attribution.perturbation.sampling import perturb
from app.attribution.solvers.consistent import AdmmTrace, solve_c2fa
from app.attribution.solvers.separate import solve_separate

logger = get_experiment_logger()


@dataclass(frozen=True)
class SampleSeeds:
    """Seeds of one synthetic sample, derived from (seed, sample_id)."""
    oracle: int
    perturbation: int
    top_down: int

    @classmethod
    def derive(cls, seed: int, sample_id: int) -> "SampleSeeds":
        state = np.random.SeedSequence([seed, sample_id]).generate_state(3)
        return cls(oracle=int(state[0]), perturbation=int(state[1]), top_down=int(state[2]))


@dataclass
class MethodOutcome:
    pair: AttributionPair
    converged: bool = True
    trace: Optional[AdmmTrace] = None


@dataclass(frozen=True)
class Hyperparameters:
    lambda_high: float
    lambda_low: float
    mu2: float

    def apply(self, cfg: SolverConfig) -> SolverConfig:
        return cfg.with_overrides(lambda_high=self.lambda_high, lambda_low=self.lambda_low, mu2=self.mu2)

    def to_dict(self) -> dict:
        return {"lambda_high": self.lambda_high, "lambda_low": self.lambda_low, "mu2": self.mu2}


def _estimate(
    methods: list[str],
    oracle,
    shape: NestedShape,
    n_high: int,
    n_low: int,
    weight_spec: WeightSpec,
    c2fa_cfg: SolverConfig,
    lime_cfg: SolverConfig,
    seeds: SampleSeeds,
) -> dict[str, MethodOutcome]:
    """Explain one sample with every method from one shared set of perturbations."""
    high, low = perturb(shape, oracle, n_high, n_low, weight_spec, seeds.perturbation)
    outcomes: dict[str, MethodOutcome] = {}

    if "c2fa" in methods:
        m = build_aggregation_matrix(shape)
        try:
            pair, trace = solve_c2fa(high, low, m, c2fa_cfg)
            outcomes["c2fa"] = MethodOutcome(pair=pair, trace=trace)
        except ConvergenceError as e:
            outcomes["c2fa"] = MethodOutcome(pair=e.last_pair, converged=False, trace=e.trace)

    if any(name in methods for name in ("lime", "bu_lime", "td_lime")):
        separate = solve_separate(high, low, lime_cfg.lambda_high, lime_cfg.lambda_low)
        if "lime" in methods:
            outcomes["lime"] = MethodOutcome(pair=separate)
        if "bu_lime" in methods:
            outcomes["bu_lime"] = MethodOutcome(pair=bu_lime(separate.lofa, build_aggregation_matrix(shape)))
        if "td_lime" in methods:
            outcomes["td_lime"] = MethodOutcome(pair=td_lime(separate.hifa, shape, seeds.top_down))

    return outcomes


def _score(outcome: MethodOutcome, oracle, shape: NestedShape) -> EvalReport:
    return evaluate_pair(outcome.pair, oracle, shape, oracle.instance_labels(), oracle.low_labels())


class ExperimentRunner:
    """Runs one validated ExperimentConfig."""

    def __init__(self, config: ExperimentConfig, output_dir: Path):
        self.config = config
        self.output_dir = Path(output_dir)
        self.oracle_spec = config.oracle.to_oracle_spec()
        self.shape = NestedShape(tuple(config.oracle.group_sizes))
        self.weight_spec = WeightSpec.parse(config.weight_kind)
        self.solver_cfg = config.solver.to_solver_config()

    def _run_sample(
        self,
        n_high: int,
        n_low: int,
        seed: int,
        sample_id: int,
        c2fa_cfg: SolverConfig,
        lime_cfg: SolverConfig,
        methods: list[str],
    ) -> tuple[list[dict], dict[str, MethodOutcome]]:
        seeds = SampleSeeds.derive(seed, sample_id)
        oracle = build_oracle(self.oracle_spec, seed=seeds.oracle)
        outcomes = _estimate(
            methods, oracle, self.shape, n_high, n_low, self.weight_spec, c2fa_cfg, lime_cfg, seeds
        )

        rows = []
        keys = {"n_high": n_high, "n_low": n_low, "seed": seed, "sample_id": sample_id}
        for method, outcome in outcomes.items():
            report = _score(outcome, oracle, self.shape)
            rows.extend(report.to_rows(method=method, **keys))
            rows.append({"method": method, **keys, "metric": "converged", "value": int(outcome.converged)})
            if not outcome.converged:
                logger.warning("sample_not_converged", method=method, **keys)
        return rows, outcomes

    def _map_samples(self, tasks: list[tuple], fn) -> list:
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
                return list(executor.map(lambda args: fn(*args), tasks))
        return [fn(*args) for args in tasks]

    def _validation_score(self, n_high: int, n_low: int, c2fa_cfg: SolverConfig, lime_cfg: SolverConfig, method: str) -> float:
        sample_ids = range(self.config.n_samples, self.config.n_samples + self.config.n_validation)
        tasks = [
            (n_high, n_low, seed, sample_id, c2fa_cfg, lime_cfg, [method])
            for seed in self.config.seeds
            for sample_id in sample_ids
        ]
        scores = []
        for rows, _ in self._map_samples(tasks, self._run_sample):
            values = {row["metric"]: row["value"] for row in rows}
            scores.append(np.nanmean([values["ndcg"], values["auroc"]]))
        return float(np.nanmean(scores)) if scores else float("nan")

    def select_hyperparameters(self, n_high: int, n_low: int) -> dict[str, Hyperparameters]:
        """
        Grid search on held-out samples (ids after the test samples),
        maximizing mean NDCG + AUROC. Ties keep the earlier grid entry.
        """
        selected: dict[str, Hyperparameters] = {}

        if "c2fa" in self.config.methods:
            best, best_score = None, -np.inf
            for lam_h, lam_l, mu2 in product(LAMBDA_GRID, LAMBDA_GRID, MU2_GRID):
                candidate = Hyperparameters(lam_h, lam_l, mu2)
                score = self._validation_score(n_high, n_low, candidate.apply(self.solver_cfg), self.solver_cfg, "c2fa")
                if score > best_score:
                    best, best_score = candidate, score
            selected["c2fa"] = best

        if any(name in self.config.methods for name in ("lime", "bu_lime", "td_lime")):
            best, best_score = None, -np.inf
            for lam_h, lam_l in product(LAMBDA_GRID, LAMBDA_GRID):
                candidate = Hyperparameters(lam_h, lam_l, self.solver_cfg.mu2)
                score = self._validation_score(n_high, n_low, self.solver_cfg, candidate.apply(self.solver_cfg), "lime")
                if score > best_score:
                    best, best_score = candidate, score
            selected["lime"] = best

        logger.info(
            "hyperparameters_selected",
            n_high=n_high,
            n_low=n_low,
            **{method: hp.to_dict() if hp else None for method, hp in selected.items()},
        )
        return selected

    def run(self) -> tuple[pd.DataFrame, Optional[dict]]:
        rows: list[dict] = []
        selected_all: dict[str, dict] = {}

        for n_high, n_low in self.config.grid.points():
            c2fa_cfg = lime_cfg = self.solver_cfg
            if self.config.tune:
                selected = self.select_hyperparameters(n_high, n_low)
                if selected.get("c2fa"):
                    c2fa_cfg = selected["c2fa"].apply(self.solver_cfg)
                if selected.get("lime"):
                    lime_cfg = selected["lime"].apply(self.solver_cfg)
                selected_all[f"n_high={n_high},n_low={n_low}"] = {
                    method: hp.to_dict() for method, hp in selected.items() if hp
                }

            logger.info("cell_started", n_high=n_high, n_low=n_low, methods=self.config.methods)
            tasks = [
                (n_high, n_low, seed, sample_id, c2fa_cfg, lime_cfg, self.config.methods)
                for seed in self.config.seeds
                for sample_id in range(self.config.n_samples)
            ]
            for (_, _, seed, sample_id, *_), (sample_rows, outcomes) in zip(tasks, self._map_samples(tasks, self._run_sample)):
                rows.extend(sample_rows)
                if self.config.save_traces and "c2fa" in outcomes and outcomes["c2fa"].trace is not None:
                    outcomes["c2fa"].trace.to_csv(
                        self.output_dir / "trace" / f"c2fa_nh{n_high}_nl{n_low}_seed{seed}_sample{sample_id}.csv"
                    )
            logger.info("cell_finished", n_high=n_high, n_low=n_low, samples=len(tasks))

        frame = pd.DataFrame(rows)
        return frame, (selected_all if self.config.tune else None)

    def write(self, frame: pd.DataFrame, selected: Optional[dict]) -> dict[str, Path]:
        results = write_results_csv(frame, self.output_dir / "results.csv")
        aggregate = write_json(
            build_aggregate(frame, self.config.model_dump(by_alias=True), selected),
            self.output_dir / "aggregate.json",
        )
        curves = write_curves(frame, self.output_dir / "curves")
        logger.info("artifacts_written", output_dir=str(self.output_dir), rows=len(frame), curves=len(curves))
        return {"results": results, "aggregate": aggregate, "curves": self.output_dir / "curves"}


def execute_experiment(config: ExperimentConfig, output_dir: Path) -> dict[str, Path]:
    runner = ExperimentRunner(config, output_dir)
    frame, selected = runner.run()
    return runner.write(frame, selected)


def run_experiment(
    config_path: Path,
    out_dir: Optional[Path] = None,
    seeds: Optional[list[int]] = None,
    default_output_dir: Optional[Path] = None,
) -> int:
    """
    Run the experiment described by a JSON config.

    Output directory precedence: out_dir, then the config's output_dir, then
    default_output_dir. Returns 0; configuration problems raise
    ConfigValidationError.
    """
    config = load_experiment_config(Path(config_path))
    if seeds:
        config = config.model_copy(update={"seeds": list(seeds)})

    output_dir = out_dir or (Path(config.output_dir) if config.output_dir else None) or default_output_dir
    if output_dir is None:
        output_dir = Path("results")

    logger.info(
        "experiment_started",
        config=str(config_path),
        output_dir=str(output_dir),
        family=config.oracle.family,
        grid=config.grid.points(),
        seeds=config.seeds,
    )
    execute_experiment(config, Path(output_dir))
    return 0
