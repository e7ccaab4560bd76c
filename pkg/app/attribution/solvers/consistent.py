"""
Consistency-Constrained Two-Level Solver
ADMM for

    min  L_H(alpha) + L_L(beta) + lambda_H ||alpha||^2 + lambda_L ||beta||^2
    s.t. alpha = M beta

plus two closed-form references: the exact KKT solve of the constrained
problem and the minimizer of its mu2-penalized form.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve

from app.attribution.config import SolverConfig, SOLVER_CONFIG
from app.attribution.core.nested import (
    AggregationMatrix,
    AttributionPair,
    NestedShape,
    build_aggregation_matrix,
    consistency_residual,
)
from app.attribution.exceptions import (
    ConfigValidationError,
    ConvergenceError,
    ShapeError,
    SingularSystemError,
)
from app.attribution.logging_utils import get_solver_logger
from app.attribution.perturbation.kernels import WeightSpec
from app.attribution.perturbation.sampling import BlackBoxOracle, PerturbationSet, perturb
from app.attribution.solvers.separate import RidgeProblem

logger = get_solver_logger()

PENALTY_BOUNDS = (1e-6, 1e6)


@dataclass
class AdmmState:
    """Primal, auxiliary and dual iterates."""
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta: np.ndarray
    beta_bar: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    iter: int = 0

    @classmethod
    def zeros(cls, n_groups: int, d_total: int) -> "AdmmState":
        return cls(
            alpha=np.zeros(n_groups),
            alpha_bar=np.zeros(n_groups),
            beta=np.zeros(d_total),
            beta_bar=np.zeros(d_total),
            v1=np.zeros(n_groups),
            v2=np.zeros(d_total),
            v3=np.zeros(n_groups),
        )

    @classmethod
    def from_pair(cls, pair: AttributionPair) -> "AdmmState":
        """Warm start with primal and auxiliary variables at the pair, duals at zero."""
        state = cls.zeros(pair.hifa.size, pair.lofa.size)
        state.alpha = pair.hifa.copy()
        state.alpha_bar = pair.hifa.copy()
        state.beta = pair.lofa.copy()
        state.beta_bar = pair.lofa.copy()
        return state

    def check_dims(self, n_groups: int, d_total: int) -> None:
        for name in ("alpha", "alpha_bar", "v1", "v3"):
            if getattr(self, name).shape != (n_groups,):
                raise ShapeError(f"state '{name}' must have length J={n_groups}")
        for name in ("beta", "beta_bar", "v2"):
            if getattr(self, name).shape != (d_total,):
                raise ShapeError(f"state '{name}' must have length D-dagger={d_total}")

    def copy(self) -> "AdmmState":
        return AdmmState(
            alpha=self.alpha.copy(),
            alpha_bar=self.alpha_bar.copy(),
            beta=self.beta.copy(),
            beta_bar=self.beta_bar.copy(),
            v1=self.v1.copy(),
            v2=self.v2.copy(),
            v3=self.v3.copy(),
            iter=self.iter,
        )


@dataclass
class AdmmTrace:
    """Per-iteration residuals, objective and stop-rule change norms."""
    h1: list[float] = field(default_factory=list)
    h2: list[float] = field(default_factory=list)
    h3: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    change: list[float] = field(default_factory=list)
    mu1: list[float] = field(default_factory=list)
    mu2: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.objective)

    def append(self, h1, h2, h3, objective, change, mu1, mu2) -> None:
        self.h1.append(h1)
        self.h2.append(h2)
        self.h3.append(h3)
        self.objective.append(objective)
        self.change.append(change)
        self.mu1.append(mu1)
        self.mu2.append(mu2)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iter": np.arange(1, len(self) + 1),
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "objective": self.objective,
            "change": self.change,
            "mu1": self.mu1,
            "mu2": self.mu2,
        })

    def to_csv(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path


@dataclass(frozen=True, eq=False)
class _LevelStats:
    """Sufficient statistics of one weighted level: Z^T W Z, Z^T W y and y^T W y / 2."""
    gram: np.ndarray
    rhs: np.ndarray
    offset: float

    @classmethod
    def from_set(cls, pset: PerturbationSet) -> "_LevelStats":
        problem = RidgeProblem.from_set(pset, lam=0.0)
        gram, rhs = problem.normal_equations()
        y = np.asarray(pset.outputs, dtype=float)
        offset = 0.5 * float(y @ (pset.require_weights() * y))
        return cls(gram=gram, rhs=rhs, offset=offset)

    def loss(self, theta: np.ndarray) -> float:
        """Weighted half squared error, expanded through the Gram matrix."""
        return self.offset - float(theta @ self.rhs) + 0.5 * float(theta @ self.gram @ theta)


def _check_levels(high: PerturbationSet, low: PerturbationSet, m: AggregationMatrix) -> None:
    if high.width != m.shape.n_groups:
        raise ShapeError(f"high-level masks have width {high.width}, expected J={m.shape.n_groups}")
    if low.width != m.shape.d_total:
        raise ShapeError(f"low-level masks have width {low.width}, expected D-dagger={m.shape.d_total}")


def _spd_inverse(matrix: np.ndarray, system: str) -> np.ndarray:
    try:
        factor = cho_factor(matrix)
    except LinAlgError:
        rank = int(np.linalg.matrix_rank(matrix))
        raise SingularSystemError(system, deficiency=matrix.shape[0] - rank)
    return cho_solve(factor, np.eye(matrix.shape[0]))


def _balance(penalty: float, primal: float, dual: float, cfg: SolverConfig) -> float:
    """Residual balancing: grow the penalty when the primal residual dominates, shrink it otherwise."""
    if primal > cfg.penalty_ratio * dual:
        return min(penalty * cfg.penalty_scale, PENALTY_BOUNDS[1])
    if dual > cfg.penalty_ratio * primal:
        return max(penalty / cfg.penalty_scale, PENALTY_BOUNDS[0])
    return penalty


class _Precomputed:
    """A, B, C, D for the current penalties."""

    def __init__(self, hs: _LevelStats, ls: _LevelStats, mtm: np.ndarray, mu1: float, mu2: float):
        n_groups, d_total = hs.gram.shape[0], ls.gram.shape[0]
        self.a = _spd_inverse(hs.gram + (mu1 + mu2) * np.eye(n_groups), "high-level ADMM")
        self.b = self.a @ hs.rhs
        self.c = _spd_inverse(ls.gram + mu1 * np.eye(d_total) + mu2 * mtm, "low-level ADMM")
        self.d = self.c @ ls.rhs


def solve_c2fa(
    high: PerturbationSet,
    low: PerturbationSet,
    m: AggregationMatrix,
    cfg: SolverConfig = SOLVER_CONFIG,
    init_state: Optional[AdmmState] = None,
) -> tuple[AttributionPair, AdmmTrace]:
    """
    Estimate a consistent HiFA/LoFA pair with ADMM.

    Args:
        high: Weighted high-level perturbations
        low: Weighted low-level perturbations
        m: Aggregation matrix of the nested shape
        cfg: Solver configuration
        init_state: Starting iterate, used only when cfg.init == "custom"

    Returns:
        (AttributionPair of the auxiliary variables, AdmmTrace)

    Raises:
        ConvergenceError: if max_iters is reached, carrying the trace
        SingularSystemError: if a precomputed system cannot be factorized
    """
    _check_levels(high, low, m)
    n_groups, d_total = m.shape.n_groups, m.shape.d_total
    mm = m.entries
    mtm = mm.T @ mm

    hs, ls = _LevelStats.from_set(high), _LevelStats.from_set(low)

    if cfg.init == "custom":
        if init_state is None:
            raise ConfigValidationError("init", "custom initialization needs an init_state")
        init_state.check_dims(n_groups, d_total)
        state = init_state.copy()
        state.iter = 0
    else:
        state = AdmmState.zeros(n_groups, d_total)

    mu1, mu2 = cfg.mu1, cfg.mu2
    pre = _Precomputed(hs, ls, mtm, mu1, mu2)
    trace = AdmmTrace()
    adaptations = 0

    def _objective(alpha_bar: np.ndarray, beta_bar: np.ndarray) -> float:
        return (
            hs.loss(alpha_bar)
            + ls.loss(beta_bar)
            + cfg.lambda_high * float(alpha_bar @ alpha_bar)
            + cfg.lambda_low * float(beta_bar @ beta_bar)
        )

    for t in range(1, cfg.max_iters + 1):
        alpha_bar_prev = state.alpha_bar
        beta_bar_prev = state.beta_bar
        beta_prev = state.beta

        alpha = pre.b + pre.a @ (mu2 * (mm @ state.beta) + mu1 * state.alpha_bar - state.v1 - state.v3)
        alpha_bar = (state.v1 + mu1 * alpha) / (mu1 + 2.0 * cfg.lambda_high)
        beta = pre.d + pre.c @ (mm.T @ state.v3 + mu1 * state.beta_bar + mu2 * (mm.T @ alpha) - state.v2)
        beta_bar = (state.v2 + mu1 * beta) / (mu1 + 2.0 * cfg.lambda_low)

        h1 = alpha - alpha_bar
        h2 = beta - beta_bar
        h3 = alpha - mm @ beta
        v1 = state.v1 + mu1 * h1
        v2 = state.v2 + mu1 * h2
        v3 = state.v3 + mu2 * h3

        state = AdmmState(alpha, alpha_bar, beta, beta_bar, v1, v2, v3, iter=t)

        d_alpha_bar = alpha_bar - alpha_bar_prev
        d_beta_bar = beta_bar - beta_bar_prev
        change = float(d_alpha_bar @ d_alpha_bar + d_beta_bar @ d_beta_bar)
        h1_sq, h2_sq, h3_sq = float(h1 @ h1), float(h2 @ h2), float(h3 @ h3)
        trace.append(h1_sq, h2_sq, h3_sq, _objective(alpha_bar, beta_bar), change, mu1, mu2)

        # the returned barred pair must itself be consistent at eps2
        gap = alpha_bar - mm @ beta_bar
        if change < cfg.eps1 and h1_sq + h2_sq + h3_sq < cfg.eps2 and float(gap @ gap) <= cfg.eps2:
            pair = AttributionPair(
                hifa=alpha_bar,
                lofa=beta_bar,
                meta={"method": "c2fa", "iterations": t, "converged": True},
            )
            logger.debug(
                "admm_converged",
                iterations=t,
                residual=h1_sq + h2_sq + h3_sq,
                change=change,
                adaptations=adaptations,
                mu1=mu1,
                mu2=mu2,
            )
            return pair, trace

        if cfg.adaptive_penalty and t <= cfg.adapt_until:
            new_mu1 = _balance(
                mu1,
                primal=np.sqrt(h1_sq + h2_sq),
                dual=mu1 * np.sqrt(change),
                cfg=cfg,
            )
            d_beta = mm @ (beta - beta_prev)
            new_mu2 = _balance(
                mu2,
                primal=np.sqrt(h3_sq),
                dual=mu2 * float(np.sqrt(d_beta @ d_beta)),
                cfg=cfg,
            )
            if new_mu1 != mu1 or new_mu2 != mu2:
                mu1, mu2 = new_mu1, new_mu2
                pre = _Precomputed(hs, ls, mtm, mu1, mu2)
                adaptations += 1

    last_pair = AttributionPair(
        hifa=state.alpha_bar,
        lofa=state.beta_bar,
        meta={"method": "c2fa", "iterations": cfg.max_iters, "converged": False},
    )
    logger.warning(
        "admm_not_converged",
        iterations=cfg.max_iters,
        residual=trace.h1[-1] + trace.h2[-1] + trace.h3[-1],
        change=trace.change[-1],
    )
    raise ConvergenceError(cfg.max_iters, trace=trace, last_pair=last_pair)


def solve_kkt_oracle(
    high: PerturbationSet,
    low: PerturbationSet,
    m: AggregationMatrix,
    lambda_high: float,
    lambda_low: float,
) -> AttributionPair:
    """
    Exact solution of the constrained problem from its KKT system.

        [ H   G^T ] [theta]   [Z^T W y]
        [ G   0   ] [ nu  ] = [   0   ]

    with H = blockdiag(Z_H^T W_H Z_H + 2 lambda_H I, Z_L^T W_L Z_L + 2 lambda_L I)
    and G = [I_J | -M].
    """
    _check_levels(high, low, m)
    n_groups, d_total = m.shape.n_groups, m.shape.d_total
    hs, ls = _LevelStats.from_set(high), _LevelStats.from_set(low)

    hessian = np.zeros((n_groups + d_total, n_groups + d_total))
    hessian[:n_groups, :n_groups] = hs.gram + 2.0 * lambda_high * np.eye(n_groups)
    hessian[n_groups:, n_groups:] = ls.gram + 2.0 * lambda_low * np.eye(d_total)
    constraints = np.hstack([np.eye(n_groups), -m.entries])

    kkt = np.block([
        [hessian, constraints.T],
        [constraints, np.zeros((n_groups, n_groups))],
    ])
    rhs = np.concatenate([hs.rhs, ls.rhs, np.zeros(n_groups)])

    rank = int(np.linalg.matrix_rank(kkt))
    if rank < kkt.shape[0]:
        raise SingularSystemError("KKT", deficiency=kkt.shape[0] - rank)
    try:
        solution = solve(kkt, rhs, assume_a="sym")
    except LinAlgError:
        raise SingularSystemError("KKT")

    return AttributionPair(
        hifa=solution[:n_groups],
        lofa=solution[n_groups:n_groups + d_total],
        meta={"method": "kkt"},
    )


def solve_penalized(
    high: PerturbationSet,
    low: PerturbationSet,
    m: AggregationMatrix,
    cfg: SolverConfig = SOLVER_CONFIG,
) -> AttributionPair:
    """
    Exact minimizer of penalized_objective for cfg.mu2 (soft consistency).

    Tends to the separate ridge fits as mu2 -> 0 and to the constrained
    solution as mu2 -> infinity.
    """
    _check_levels(high, low, m)
    n_groups, d_total = m.shape.n_groups, m.shape.d_total
    hs, ls = _LevelStats.from_set(high), _LevelStats.from_set(low)
    mm, mu2 = m.entries, cfg.mu2

    normal = np.block([
        [hs.gram + (2.0 * cfg.lambda_high + mu2) * np.eye(n_groups), -mu2 * mm],
        [-mu2 * mm.T, ls.gram + 2.0 * cfg.lambda_low * np.eye(d_total) + mu2 * (mm.T @ mm)],
    ])
    rhs = np.concatenate([hs.rhs, ls.rhs])
    try:
        theta = cho_solve(cho_factor(normal), rhs)
    except LinAlgError:
        rank = int(np.linalg.matrix_rank(normal))
        raise SingularSystemError("penalized normal", deficiency=normal.shape[0] - rank)

    return AttributionPair(
        hifa=theta[:n_groups],
        lofa=theta[n_groups:],
        meta={"method": "penalized", "mu2": mu2},
    )


def objective_value(
    pair: AttributionPair,
    high: PerturbationSet,
    low: PerturbationSet,
    lambda_high: float,
    lambda_low: float,
) -> float:
    """L_H(alpha) + L_L(beta) + lambda_H ||alpha||^2 + lambda_L ||beta||^2."""
    if pair.hifa.shape != (high.width,) or pair.lofa.shape != (low.width,):
        raise ShapeError(
            f"pair lengths ({pair.hifa.size}, {pair.lofa.size}) do not match "
            f"mask widths ({high.width}, {low.width})"
        )
    r_high = high.outputs - high.masks @ pair.hifa
    r_low = low.outputs - low.masks @ pair.lofa
    return float(
        0.5 * r_high @ (high.require_weights() * r_high)
        + 0.5 * r_low @ (low.require_weights() * r_low)
        + lambda_high * pair.hifa @ pair.hifa
        + lambda_low * pair.lofa @ pair.lofa
    )


def penalized_objective(
    pair: AttributionPair,
    high: PerturbationSet,
    low: PerturbationSet,
    m: AggregationMatrix,
    cfg: SolverConfig = SOLVER_CONFIG,
) -> float:
    """Unpenalized objective plus (mu2 / 2) ||alpha - M beta||^2."""
    base = objective_value(pair, high, low, cfg.lambda_high, cfg.lambda_low)
    return base + 0.5 * cfg.mu2 * consistency_residual(pair, m)


def explain_c2fa(
    shape: NestedShape,
    oracle: BlackBoxOracle,
    n_high: int,
    n_low: int,
    weight_spec: WeightSpec,
    cfg: SolverConfig = SOLVER_CONFIG,
    seed: int = 0,
) -> tuple[AttributionPair, AdmmTrace]:
    """Sample, query, weigh and solve in one call."""
    high, low = perturb(shape, oracle, n_high, n_low, weight_spec, seed)
    return solve_c2fa(high, low, build_aggregation_matrix(shape), cfg)
