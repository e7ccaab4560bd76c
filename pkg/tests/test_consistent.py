import numpy as np
import pandas as pd
import pytest

from app.attribution.bench.oracles import make_linear_oracle
from app.attribution.config import SolverConfig
from app.attribution.core.nested import (
    AttributionPair,
    NestedShape,
    build_aggregation_matrix,
    consistency_residual,
)
from app.attribution.exceptions import ConfigValidationError, ConvergenceError, ShapeError
from app.attribution.perturbation.kernels import WeightSpec
from app.attribution.perturbation.sampling import Level, PerturbationSet, sample_masks
from app.attribution.solvers.consistent import (
    AdmmState,
    explain_c2fa,
    objective_value,
    penalized_objective,
    solve_c2fa,
    solve_kkt_oracle,
    solve_penalized,
)
from app.attribution.solvers.separate import RidgeProblem, solve_ridge, solve_separate
from tests.conftest import random_sets


def _zero_sets(shape, n=16):
    spec = WeightSpec()
    high = PerturbationSet(sample_masks(n, shape.n_groups, 0), np.zeros(n), Level.HIGH).with_weights(spec)
    low = PerturbationSet(sample_masks(n, shape.d_total, 1), np.zeros(n), Level.LOW).with_weights(spec)
    return high, low


class TestSolveC2fa:
    def test_zero_outputs_stop_after_one_iteration(self, small_shape, small_m):
        high, low = _zero_sets(small_shape)
        pair, trace = solve_c2fa(high, low, small_m, SolverConfig())
        np.testing.assert_array_equal(pair.hifa, np.zeros(2))
        np.testing.assert_array_equal(pair.lofa, np.zeros(4))
        assert len(trace) == 1

    def test_matches_kkt_on_small_instance(self, small_shape, small_m):
        high, low = random_sets(small_shape, 24, 24, seed=12)
        cfg = SolverConfig(lambda_high=0.01, lambda_low=0.01, mu2=0.1, eps1=1e-8, eps2=1e-8)
        pair, _ = solve_c2fa(high, low, small_m, cfg)
        reference = solve_kkt_oracle(high, low, small_m, 0.01, 0.01)
        gap = np.concatenate([pair.hifa - reference.hifa, pair.lofa - reference.lofa])
        assert np.linalg.norm(gap) <= 1e-3

    def test_output_is_consistent_at_tolerance(self, bench_shape):
        m = build_aggregation_matrix(bench_shape)
        cfg = SolverConfig()
        for seed in range(5):
            high, low = random_sets(bench_shape, 30, 60, seed=seed)
            pair, trace = solve_c2fa(high, low, m, cfg)
            assert consistency_residual(pair, m) <= cfg.eps2
            assert trace.h1[-1] + trace.h2[-1] + trace.h3[-1] < cfg.eps2
            assert pair.meta["converged"] is True

    def test_fixed_penalties_converge(self, small_shape, small_m):
        high, low = random_sets(small_shape, 20, 20, seed=4)
        cfg = SolverConfig(
            lambda_high=0.1, lambda_low=0.1, mu1=1.0, mu2=1.0,
            eps1=1e-10, eps2=1e-10, max_iters=50_000, adaptive_penalty=False,
        )
        pair, trace = solve_c2fa(high, low, small_m, cfg)
        reference = solve_kkt_oracle(high, low, small_m, 0.1, 0.1)
        np.testing.assert_allclose(pair.hifa, reference.hifa, atol=1e-3)
        np.testing.assert_allclose(pair.lofa, reference.lofa, atol=1e-3)
        assert set(trace.mu2) == {1.0}

    def test_max_iters_raises_with_trace(self, bench_shape):
        m = build_aggregation_matrix(bench_shape)
        high, low = random_sets(bench_shape, 30, 60, seed=1)
        with pytest.raises(ConvergenceError) as excinfo:
            solve_c2fa(high, low, m, SolverConfig(max_iters=3))
        error = excinfo.value
        assert error.iterations == 3
        assert len(error.trace) == 3
        assert error.last_pair.meta["converged"] is False

    def test_custom_init_needs_state(self, small_shape, small_m):
        high, low = random_sets(small_shape, 20, 20, seed=0)
        with pytest.raises(ConfigValidationError):
            solve_c2fa(high, low, small_m, SolverConfig(init="custom"))

    def test_custom_init_checks_dimensions(self, small_shape, small_m):
        high, low = random_sets(small_shape, 20, 20, seed=0)
        with pytest.raises(ShapeError):
            solve_c2fa(high, low, small_m, SolverConfig(init="custom"), init_state=AdmmState.zeros(3, 4))

    def test_level_widths_must_match(self, small_m):
        high, low = random_sets(NestedShape((2, 1)), 20, 20, seed=0)
        with pytest.raises(ShapeError):
            solve_c2fa(high, low, small_m)

    def test_trace_csv(self, small_shape, small_m, tmp_path):
        high, low = random_sets(small_shape, 20, 20, seed=2)
        _, trace = solve_c2fa(high, low, small_m)
        path = trace.to_csv(tmp_path / "trace" / "c2fa.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns[:5]) == ["iter", "h1", "h2", "h3", "objective"]
        assert len(frame) == len(trace)
        assert frame["iter"].iloc[0] == 1


class TestKktOracle:
    def test_constraint_holds_to_machine_precision(self, bench_shape):
        m = build_aggregation_matrix(bench_shape)
        high, low = random_sets(bench_shape, 40, 80, seed=8)
        pair = solve_kkt_oracle(high, low, m, 0.1, 1.0)
        assert np.max(np.abs(pair.hifa - m.aggregate(pair.lofa))) <= 1e-10

    def test_single_feature_is_pooled_ridge(self):
        shape = NestedShape((1,))
        m = build_aggregation_matrix(shape)
        high, low = random_sets(shape, 15, 25, seed=6)
        pair = solve_kkt_oracle(high, low, m, 0.3, 0.2)
        pooled = RidgeProblem(
            masks=np.vstack([high.masks, low.masks]),
            outputs=np.concatenate([high.outputs, low.outputs]),
            weights=np.concatenate([high.weights, low.weights]),
            lam=0.5,
        )
        expected = solve_ridge(pooled)
        assert pair.hifa[0] == pytest.approx(expected[0], abs=1e-10)
        assert pair.lofa[0] == pytest.approx(expected[0], abs=1e-10)


class TestObjectives:
    def test_zero_pair_zero_outputs(self, small_shape, small_m):
        high, low = _zero_sets(small_shape)
        zero = AttributionPair(hifa=np.zeros(2), lofa=np.zeros(4))
        assert penalized_objective(zero, high, low, small_m, SolverConfig()) == 0.0

    def test_gram_trace_matches_direct_objective(self, small_shape, small_m):
        high, low = random_sets(small_shape, 20, 30, seed=3)
        cfg = SolverConfig()
        pair, trace = solve_c2fa(high, low, small_m, cfg)
        direct = objective_value(pair, high, low, cfg.lambda_high, cfg.lambda_low)
        assert trace.objective[-1] == pytest.approx(direct, rel=1e-9, abs=1e-12)

    def test_separate_pair_minimizes_unpenalized_objective(self, bench_shape):
        m = build_aggregation_matrix(bench_shape)
        high, low = random_sets(bench_shape, 30, 60, seed=5)
        cfg = SolverConfig()
        separate = solve_separate(high, low, cfg.lambda_high, cfg.lambda_low)
        base = objective_value(separate, high, low, cfg.lambda_high, cfg.lambda_low)
        for other in (solve_c2fa(high, low, m, cfg)[0], solve_penalized(high, low, m, cfg)):
            assert base <= objective_value(other, high, low, cfg.lambda_high, cfg.lambda_low) + 1e-12

    def test_penalized_minimizer_beats_separate(self, bench_shape):
        m = build_aggregation_matrix(bench_shape)
        high, low = random_sets(bench_shape, 30, 60, seed=9)
        cfg = SolverConfig(mu2=0.1)
        separate = solve_separate(high, low, cfg.lambda_high, cfg.lambda_low)
        penalized = solve_penalized(high, low, m, cfg)
        assert consistency_residual(separate, m) > 1e-3
        assert penalized_objective(penalized, high, low, m, cfg) < penalized_objective(separate, high, low, m, cfg)

    def test_large_penalty_approaches_constrained_solution(self, bench_shape):
        m = build_aggregation_matrix(bench_shape)
        high, low = random_sets(bench_shape, 30, 60, seed=10)
        penalized = solve_penalized(high, low, m, SolverConfig(mu2=1e6))
        reference = solve_kkt_oracle(high, low, m, 0.1, 0.1)
        np.testing.assert_allclose(penalized.lofa, reference.lofa, atol=1e-3)


def test_explain_c2fa_on_linear_oracle():
    shape = NestedShape((2, 2, 3))
    oracle = make_linear_oracle(shape, "random", seed=2)
    cfg = SolverConfig(lambda_high=1e-8, lambda_low=1e-8, eps1=1e-10, eps2=1e-10)
    pair, trace = explain_c2fa(shape, oracle, 100, 200, WeightSpec(), cfg, seed=4)
    np.testing.assert_allclose(pair.lofa, oracle.coeffs, atol=1e-4)
    np.testing.assert_allclose(pair.hifa, oracle.ground_truth().hifa, atol=1e-4)
    assert len(trace) >= 1
