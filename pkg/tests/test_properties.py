"""Randomized checks of solver equivalence, recovery and the synthetic benchmarks."""
import numpy as np
import pytest

from app.attribution.bench.oracles import build_oracle, make_linear_oracle
from app.attribution.config import SolverConfig
from app.attribution.core.nested import (
    AttributionPair,
    NestedShape,
    build_aggregation_matrix,
    consistency_residual,
)
from app.attribution.evaluation.metrics import auroc, surrogate_fidelity
from app.attribution.experiment.scaling import measure_scaling
from app.attribution.experiment.schema import parse_scaling_config
from app.attribution.perturbation.kernels import WeightSpec
from app.attribution.perturbation.sampling import perturb, sample_masks
from app.attribution.solvers.consistent import (
    AdmmState,
    explain_c2fa,
    penalized_objective,
    solve_c2fa,
    solve_kkt_oracle,
    solve_penalized,
)
from app.attribution.solvers.separate import lime_two_level, solve_separate
from tests.conftest import random_sets


def _random_instance(rng):
    shape = NestedShape(tuple(rng.integers(1, 5, size=int(rng.integers(1, 6)))))
    n = 4 * (shape.n_groups + shape.d_total)
    return shape, random_sets(shape, n, n, seed=int(rng.integers(1 << 30)))


def test_admm_matches_kkt_on_random_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        shape, (high, low) = _random_instance(rng)
        lam = float(rng.choice([0.01, 0.1, 1.0]))
        mu2 = float(rng.choice([0.01, 0.1]))
        cfg = SolverConfig(lambda_high=lam, lambda_low=lam, mu2=mu2, eps1=1e-6, eps2=1e-6)
        m = build_aggregation_matrix(shape)
        pair, _ = solve_c2fa(high, low, m, cfg)
        reference = solve_kkt_oracle(high, low, m, lam, lam)
        gap = np.concatenate([pair.hifa - reference.hifa, pair.lofa - reference.lofa])
        worst = max(worst, float(np.linalg.norm(gap)))
    assert worst <= 1e-3


def test_solution_does_not_depend_on_start(bench_shape):
    m = build_aggregation_matrix(bench_shape)
    high, low = random_sets(bench_shape, 40, 80, seed=17)
    cfg = SolverConfig(init="custom", eps1=1e-10, eps2=1e-10, max_iters=50_000)
    rng = np.random.default_rng(0)
    solutions = []
    for scale in (0.0, 1.0, 10.0):
        separate = solve_separate(high, low, 0.1, 0.1)
        start = AttributionPair(
            hifa=separate.hifa + scale * rng.normal(size=4),
            lofa=separate.lofa + scale * rng.normal(size=16),
        )
        pair, _ = solve_c2fa(high, low, m, cfg, init_state=AdmmState.from_pair(start))
        solutions.append(np.concatenate([pair.hifa, pair.lofa]))
    for other in solutions[1:]:
        np.testing.assert_allclose(other, solutions[0], atol=1e-4)


@pytest.mark.parametrize("mu2", [1e-6, 1e-8])
def test_vanishing_penalty_gives_separate_fits(bench_shape, mu2):
    m = build_aggregation_matrix(bench_shape)
    high, low = random_sets(bench_shape, 30, 60, seed=3)
    penalized = solve_penalized(high, low, m, SolverConfig(mu2=mu2))
    separate = solve_separate(high, low, 0.1, 0.1)
    np.testing.assert_allclose(penalized.hifa, separate.hifa, atol=1e-3)
    np.testing.assert_allclose(penalized.lofa, separate.lofa, atol=1e-3)


@pytest.mark.parametrize("mu2", [0.01, 0.1])
def test_penalized_objective_strictly_improves_on_separate(mu2):
    rng = np.random.default_rng(int(mu2 * 1000))
    checked = 0
    while checked < 20:
        shape, (high, low) = _random_instance(rng)
        m = build_aggregation_matrix(shape)
        cfg = SolverConfig(mu2=mu2)
        separate = solve_separate(high, low, cfg.lambda_high, cfg.lambda_low)
        if consistency_residual(separate, m) <= 1e-3:
            continue
        penalized = solve_penalized(high, low, m, cfg)
        assert penalized_objective(penalized, high, low, m, cfg) < penalized_objective(separate, high, low, m, cfg)
        assert consistency_residual(penalized, m) < consistency_residual(separate, m)
        checked += 1


def test_lime_on_biased_mil_oracle_is_inconsistent():
    shape = NestedShape((4, 4, 4, 4))
    m = build_aggregation_matrix(shape)
    residuals = []
    for seed in range(9):
        oracle = build_oracle({"family": "mil", "group_sizes": [4, 4, 4, 4], "n_positive": 1, "bias_gap": 0.2}, seed=seed)
        pair = lime_two_level(shape, oracle, 20, 50, WeightSpec(), 0.1, 0.1, seed=seed)
        residuals.append(consistency_residual(pair, m))
    assert np.median(residuals) > 1e-2


def test_exact_recovery_on_noiseless_linear_oracle():
    shape = NestedShape((4, 4, 4, 4))
    oracle = make_linear_oracle(shape, "random", seed=21)
    truth = oracle.ground_truth()
    high, low = perturb(shape, oracle, 200, 400, WeightSpec(), seed=5)
    cfg = SolverConfig(lambda_high=1e-8, lambda_low=1e-8, eps1=1e-10, eps2=1e-10, max_iters=50_000)

    c2fa, _ = solve_c2fa(high, low, build_aggregation_matrix(shape), cfg)
    lime = solve_separate(high, low, 1e-8, 1e-8)
    for pair in (c2fa, lime):
        assert np.max(np.abs(pair.lofa - truth.lofa)) <= 1e-4
        assert np.max(np.abs(pair.hifa - truth.hifa)) <= 1e-4



def test_surrogate_fidelity_improves_with_budget():
    shape = NestedShape((3, 3, 3))
    cfg = SolverConfig(lambda_high=1e-6, lambda_low=1e-6, eps1=1e-10, eps2=1e-10, max_iters=50_000)
    held_out_high = sample_masks(100, shape.n_groups, seed=900)
    held_out_low = sample_masks(200, shape.d_total, seed=901)
    medians = {}
    for n in (30, 1500):
        gaps = []
        for seed in range(5):
            noisy = make_linear_oracle(shape, "uniform", noise_std=0.05, seed=seed)
            clean = make_linear_oracle(shape, noisy.coeffs)
            pair, _ = explain_c2fa(shape, noisy, n, n, WeightSpec(), cfg, seed=seed)
            gaps.append(surrogate_fidelity(pair, clean, held_out_high, held_out_low))
        medians[n] = np.median(gaps)
    assert medians[1500] < 0.5 * medians[30]
    assert medians[1500] < 0.05


@pytest.mark.slow
def test_parameter_error_rate():
    shape = NestedShape((5, 5, 5, 5))
    m = build_aggregation_matrix(shape)
    cfg = SolverConfig(lambda_high=1e-6, lambda_low=1e-6, eps1=1e-10, eps2=1e-10, max_iters=50_000)
    sizes = [50, 200, 800, 3200]
    medians = []
    for n in sizes:
        errors = []
        for seed in range(20):
            oracle = make_linear_oracle(shape, "uniform", noise_std=0.05, seed=seed)
            high, low = perturb(shape, oracle, n, n, WeightSpec(), seed=seed)
            pair, _ = solve_c2fa(high, low, m, cfg)
            errors.append(np.linalg.norm(pair.lofa - oracle.coeffs))
        medians.append(np.median(errors))
    slope = np.polyfit(np.log(sizes), np.log(medians), 1)[0]
    assert -0.75 <= slope <= -0.25


@pytest.mark.slow
def test_consistent_solver_needs_fewer_low_level_queries():
    shape = NestedShape((4, 4, 4, 4))
    m = build_aggregation_matrix(shape)
    spec = {"family": "mil", "group_sizes": [4, 4, 4, 4], "n_positive": 1, "bias_gap": 0.2}
    c2fa_scores, lime_scores = [], []
    for seed in range(3):
        oracle = build_oracle(spec, seed=seed)
        high, low = perturb(shape, oracle, 20, 50, WeightSpec(), seed=seed)
        pair, _ = solve_c2fa(high, low, m)
        c2fa_scores.append(auroc(pair.lofa, oracle.low_labels()))
        lime = lime_two_level(shape, oracle, 20, 100, WeightSpec(), 0.1, 0.1, seed=seed)
        lime_scores.append(auroc(lime.lofa, oracle.low_labels()))
    assert np.mean(c2fa_scores) >= np.mean(lime_scores)


@pytest.mark.slow
def test_wall_time_is_linear_in_low_level_budget():
    config = parse_scaling_config({
        "oracle": {"family": "linear", "group_sizes": [10] * 10, "coeffs": "uniform", "noise_std": 0.05},
        "values": [100, 200, 400, 800, 1600],
        "n_high": 50,
        "repeats": 3,
    })
    frame, fit = measure_scaling(config)
    assert list(frame["oracle_calls"]) == [150, 250, 450, 850, 1650]
    assert fit["c2fa"]["r2"] >= 0.95
