"""
Separate Ridge Solvers
Closed-form weighted ridge fits for the independent high-level and low-level
surrogates (the two-level LIME baseline).
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.attribution.core.nested import AttributionPair, NestedShape
from app.attribution.exceptions import ConfigValidationError, ShapeError, SingularSystemError
from app.attribution.logging_utils import get_solver_logger
from app.attribution.perturbation.kernels import WeightSpec
from app.attribution.perturbation.sampling import BlackBoxOracle, PerturbationSet, perturb

logger = get_solver_logger()


@dataclass(frozen=True, eq=False)
class RidgeProblem:
    """Weighted least squares with an l2 penalty and no intercept."""
    masks: np.ndarray
    outputs: np.ndarray
    weights: np.ndarray
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigValidationError("lambda", "must be >= 0")
        n_rows = np.shape(self.masks)[0]
        if np.shape(self.outputs) != (n_rows,) or np.shape(self.weights) != (n_rows,):
            raise ShapeError(
                f"ridge problem rows disagree: masks {np.shape(self.masks)}, "
                f"outputs {np.shape(self.outputs)}, weights {np.shape(self.weights)}"
            )

    @classmethod
    def from_set(cls, pset: PerturbationSet, lam: float) -> "RidgeProblem":
        return cls(
            masks=pset.masks,
            outputs=pset.outputs,
            weights=pset.require_weights(),
            lam=lam,
        )

    def normal_equations(self) -> tuple[np.ndarray, np.ndarray]:
        """(Z^T W Z, Z^T W y) for the weighted design."""
        z = np.asarray(self.masks, dtype=float)
        weighted = z * np.asarray(self.weights, dtype=float)[:, None]
        return weighted.T @ z, weighted.T @ np.asarray(self.outputs, dtype=float)


def solve_ridge(problem: RidgeProblem) -> np.ndarray:
    """
    Solve (Z^T W Z + 2 lambda I) theta = Z^T W y by Cholesky.

    Raises:
        SingularSystemError: if the normal matrix is not positive definite
    """
    gram, rhs = problem.normal_equations()
    width = gram.shape[0]
    normal = gram + 2.0 * problem.lam * np.eye(width)

    if problem.lam == 0:
        rank = int(np.linalg.matrix_rank(normal))
        if rank < width:
            raise SingularSystemError("ridge normal", deficiency=width - rank)

    try:
        factor = cho_factor(normal)
    except LinAlgError:
        rank = int(np.linalg.matrix_rank(normal))
        raise SingularSystemError("ridge normal", deficiency=width - rank)
    return cho_solve(factor, rhs)


def solve_separate(
    high: PerturbationSet,
    low: PerturbationSet,
    lambda_high: float,
    lambda_low: float,
) -> AttributionPair:
    """Fit the HiFA and LoFA surrogates independently on collected sets."""
    hifa = solve_ridge(RidgeProblem.from_set(high, lambda_high))
    lofa = solve_ridge(RidgeProblem.from_set(low, lambda_low))
    return AttributionPair(hifa=hifa, lofa=lofa, meta={"method": "lime"})


def lime_two_level(
    shape: NestedShape,
    oracle: BlackBoxOracle,
    n_high: int,
    n_low: int,
    weight_spec: WeightSpec,
    lambda_high: float,
    lambda_low: float,
    seed: int,
) -> AttributionPair:
    """
    Separate two-level LIME: sample, query and fit both levels independently.

    The returned pair is generally inconsistent.
    """
    high, low = perturb(shape, oracle, n_high, n_low, weight_spec, seed)
    pair = solve_separate(high, low, lambda_high, lambda_low)
    logger.debug("lime_two_level_solved", n_high=n_high, n_low=n_low, seed=seed)
    return pair
