"""Deterministic non-linear least squares core.

Normal-equation assembly, the damped linear step, and a classical
Levenberg-Marquardt loop.  Everything here treats the cost as the plain
sum f(theta) = sum_i ||r_i||^2 and works on an arbitrary subset S of the
residual blocks:

    g_S = sum_{i in S} J_i^T r_i
    H_S = sum_{i in S} J_i^T J_i
    step:  (H_S + lambda I) dtheta = -g_S

Problem dimensions stay small (d <= ~30) so the damped system is solved
by a dense Cholesky factorization; there is no sparse path.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import InvalidStartError, ResidualModel, EvaluationError

log = logging.getLogger(__name__)

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12


class NumericalFailure(RuntimeError):
    """The damped system could not be solved reliably at this lambda."""


@dataclass
class NormalEquations:
    """Accumulated gradient, Gauss-Newton Hessian and cost over a block set."""

    g: np.ndarray
    H: np.ndarray
    cost: float
    n_blocks: int


def build_normal_equations(model: ResidualModel, indices: np.ndarray,
                           theta) -> tuple[NormalEquations, np.ndarray]:
    """Assemble g, H and per-block costs over ``indices`` at ``theta``.

    Indices are processed in sorted order so the same block set always
    accumulates in the same order regardless of how it was drawn.  Returns
    the normal equations and the per-block cost vector aligned with the
    sorted index order.  Raises EvaluationError naming the first offending
    block if any residual or Jacobian entry is non-finite.
    """
    idx = np.sort(np.asarray(indices))
    r, jac = model.eval_blocks_with_jacobian(idx, theta)
    bad = ~np.isfinite(r).all(axis=1)
    if bad.any():
        raise EvaluationError(idx[int(np.argmax(bad))], "residual")
    bad = ~np.isfinite(jac).all(axis=(1, 2))
    if bad.any():
        raise EvaluationError(idx[int(np.argmax(bad))], "jacobian")
    g = np.einsum("ipd,ip->d", jac, r)
    H = np.einsum("ipd,ipe->de", jac, jac)
    costs = model.block_costs(idx, theta)
    return NormalEquations(g, H, float(costs.sum()), len(idx)), costs


def solve_damped_step(ne: NormalEquations, lam: float) -> np.ndarray:
    """Solve (H + lambda I) dtheta = -g by dense Cholesky.

    One round of iterative refinement keeps the relative residual at or
    below 1e-10 even for poorly scaled H.  Raises NumericalFailure when
    the factorization fails or the refined solution is still unreliable;
    the caller reacts by increasing lambda and retrying.
    """
    A = ne.H + lam * np.eye(ne.H.shape[0])
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        delta = scipy.linalg.cho_solve(factor, -ne.g, check_finite=False)
        # Iterative refinement: cheap at these sizes, tightens the residual.
        resid = A @ delta + ne.g
        delta -= scipy.linalg.cho_solve(factor, resid, check_finite=False)
        resid = A @ delta + ne.g
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(str(exc)) from exc
    if not np.isfinite(delta).all():
        raise NumericalFailure("non-finite step")
    if np.linalg.norm(resid) > 1e-10 * (np.linalg.norm(ne.g) + 1.0):
        raise NumericalFailure("residual too large after refinement")
    return delta


def initial_lambda(H: np.ndarray) -> float:
    """Scale-aware default damping from the diagonal of the first Hessian."""
    d = H.shape[0]
    lam = 1e-3 * float(np.mean(np.diag(H))) / d
    return float(np.clip(lam, 1e-8, 1e3))


@dataclass
class DampingState:
    """Multiplicative lambda schedule with hard clamps."""

    lam: float
    up_factor: float = 10.0
    down_factor: float = 10.0

    def increase(self) -> None:
        self.lam = min(self.lam * self.up_factor, LAMBDA_MAX)

    def decrease(self) -> None:
        self.lam = max(self.lam / self.down_factor, LAMBDA_MIN)


@dataclass
class SolverConfig:
    """Shared configuration for the deterministic and batched solvers.

    delta is the per-step failure confidence of the acceptance test,
    alpha the required fraction of the observed reduction, eta the
    temporary-acceptance probability of the relaxed variant and
    k0_fraction the initial batch fraction.  lambda_init of None picks a
    scale-aware default from the first Hessian diagonal.
    """

    delta: float = 0.1
    alpha: float = 0.9
    eta: float = 0.5
    k0_fraction: float = 0.1
    seed: int = 0
    lambda_init: float | None = None
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    grad_tol: float = 1e-8
    max_iter: int = 1000
    time_budget_s: float | None = None
    bound_safety: float = 1.0
    audit: bool = False

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if not 0.0 < self.k0_fraction <= 1.0:
            raise ValueError("k0_fraction must lie in (0, 1]")
        if self.lambda_up <= 1.0 or self.lambda_down <= 1.0:
            raise ValueError("lambda factors must exceed 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class TraceRecord:
    """One solver iteration as it appears in a trace CSV row."""

    run_id: str
    iteration: int
    wall_ns: int
    batch_size: int
    lam: float
    outcome: str  # success | failure | insufficient | gnc-level-advance
    batch_cost: float
    full_cost: float | None
    evals_cum: int


@dataclass
class SolveResult:
    """Final iterate plus bookkeeping for one solver run."""

    theta: object
    final_cost: float
    initial_cost: float
    evals: int
    iterations: int
    converged: bool
    trace: list[TraceRecord] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)


class _Stopwatch:
    def __init__(self):
        self.start = time.perf_counter_ns()

    def ns(self) -> int:
        return time.perf_counter_ns() - self.start

    def seconds(self) -> float:
        return self.ns() * 1e-9


def classical_lm_run(model: ResidualModel, theta0, config: SolverConfig,
                     run_id: str = "lm") -> SolveResult:
    """Full-batch Levenberg-Marquardt with multiplicative damping.

    Accepts a step iff the total cost strictly decreases; on acceptance
    lambda shrinks, on rejection it grows and the step is recomputed from
    the cached normal equations.  Terminates on the gradient tolerance,
    the iteration cap, or the wall-clock budget.  evals counts residual
    block Jacobian evaluations.
    """
    clock = _Stopwatch()
    all_idx = np.arange(model.n_residuals)
    model.prepare(theta0)
    ne, _ = build_normal_equations(model, all_idx, theta0)
    if not np.isfinite(ne.cost):
        raise InvalidStartError(f"cost at the starting point is {ne.cost}")
    evals = model.n_residuals
    lam0 = config.lambda_init if config.lambda_init is not None else initial_lambda(ne.H)
    damping = DampingState(lam0, config.lambda_up, config.lambda_down)
    theta, cost = theta0, ne.cost
    trace: list[TraceRecord] = []
    converged = False
    initial_cost = ne.cost
    t = 0
    while t < config.max_iter:
        if config.time_budget_s is not None and clock.seconds() >= config.time_budget_s:
            break
        if np.max(np.abs(ne.g)) <= config.grad_tol:
            converged = True
            break
        lam_used = damping.lam
        try:
            delta = solve_damped_step(ne, lam_used)
        except NumericalFailure:
            damping.increase()
            trace.append(TraceRecord(run_id, t, clock.ns(), model.n_residuals,
                                     lam_used, "failure", cost,
                                     cost if config.audit else None, evals))
            t += 1
            continue
        theta_new = model.retract(theta, delta)
        cost_new = model.total_cost(theta_new)
        if cost_new < cost:
            theta = theta_new
            damping.decrease()
            outcome = "success"
            model.prepare(theta)
            ne, _ = build_normal_equations(model, all_idx, theta)
            evals += model.n_residuals
            # prepare() may have refreshed model state (bundle adjustment
            # re-solves its points), so the rebuilt cost is the current one.
            cost = ne.cost
        else:
            damping.increase()
            outcome = "failure"
        trace.append(TraceRecord(run_id, t, clock.ns(), model.n_residuals,
                                 lam_used, outcome, cost,
                                 cost if config.audit else None, evals))
        t += 1
    return SolveResult(theta, cost, initial_cost, evals, t, converged, trace)
