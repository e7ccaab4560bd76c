"""Shared fixtures for the attribution test suite."""
import numpy as np
import pytest

from app.attribution.bench.oracles import make_linear_oracle, make_mil_oracle
from app.attribution.core.nested import NestedShape, build_aggregation_matrix
from app.attribution.logging_utils import configure_structlog
from app.attribution.perturbation.kernels import WeightKind, WeightSpec
from app.attribution.perturbation.sampling import BaseOracle, Level, PerturbationSet, sample_masks


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    configure_structlog(level="WARNING", json_output=False)


class ConstantOracle(BaseOracle):
    """Returns the same score for every mask."""

    def __init__(self, shape: NestedShape, value: float):
        self.shape = shape
        self.value = value

    def evaluate_high(self, mask):
        return self.value

    def evaluate_low(self, mask):
        return self.value


def random_sets(
    shape: NestedShape,
    n_high: int,
    n_low: int,
    seed: int,
    kind: WeightKind = WeightKind.COSINE,
) -> tuple[PerturbationSet, PerturbationSet]:
    """Random masks with arbitrary (generally inconsistent) outputs in [0, 1]."""
    rng = np.random.default_rng(seed)
    spec = WeightSpec(kind)
    high = PerturbationSet(
        masks=sample_masks(n_high, shape.n_groups, seed),
        outputs=rng.uniform(0.0, 1.0, n_high),
        level=Level.HIGH,
    ).with_weights(spec)
    low = PerturbationSet(
        masks=sample_masks(n_low, shape.d_total, seed + 1),
        outputs=rng.uniform(0.0, 1.0, n_low),
        level=Level.LOW,
    ).with_weights(spec)
    return high, low


@pytest.fixture
def small_shape():
    return NestedShape((2, 2))


@pytest.fixture
def bench_shape():
    return NestedShape((4, 4, 4, 4))


@pytest.fixture
def small_m(small_shape):
    return build_aggregation_matrix(small_shape)


@pytest.fixture
def linear_oracle():
    return make_linear_oracle(NestedShape((2, 2)), [0.5, 0.1, 0.2, 0.2])


@pytest.fixture
def mil_oracle(bench_shape):
    return make_mil_oracle(bench_shape, positive_groups=[1], bias_gap=0.2, seed=7)


@pytest.fixture
def instance_factory():
    return random_sets
