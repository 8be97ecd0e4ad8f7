"""Robust kernels, IRLS reweighting and graduated non-convexity.

A kernel psi replaces each block cost ||r_i||^2 by psi(||r_i||).  The
solvers keep working on plain squared norms by reweighting: with
rho(s) = psi(sqrt(s)) and w(s) = d rho / d s, scaling residual and
Jacobian by sqrt(2 w) makes the assembled gradient

    g = sum_i 2 w_i J_i^T r_i = grad sum_i psi(||r_i||)

exact, while the Gauss-Newton Hessian becomes the usual IRLS
approximation.  Weights are frozen at the evaluation point (never
differentiated through).  The factor 2 keeps the damped step consistent
with the unweighted solver when w = 1/2 everywhere, which is the inlier
weight of the smooth truncated kernel.

Costs reported to the solvers are the true robust values psi(||r_i||),
not the reweighted surrogate, so acceptance tests and traces always see
the objective actually being minimized.  Bounded kernels advertise their
ceiling through ``cost_upper_bound``; the batched solver uses it as the
reduction range b of its acceptance test.

Graduated non-convexity runs the same solve over a schedule of kernel
scales, halving down to the target scale, warm-starting each level from
the last.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import SolveResult, SolverConfig, TraceRecord, _Stopwatch, \
    classical_lm_run
from .model import ResidualModel
from .progressive import _ProgressiveRun, BatchState

KERNEL_KINDS = ("none", "smooth-truncated-quadratic", "geman-mcclure", "welsch")


@dataclass(frozen=True)
class RobustKernel:
    """Kernel family and scale tau (the inlier/outlier crossover)."""

    kind: str
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind != "none" and self.tau <= 0.0:
            raise ValueError("kernel scale tau must be positive")


def _rho_of_square(kernel: RobustKernel, s):
    """psi(sqrt(s)) for squared residual norms s, vectorized."""
    s = np.asarray(s, dtype=float)
    tau2 = kernel.tau ** 2
    if kernel.kind == "none":
        return s
    if kernel.kind == "smooth-truncated-quadratic":
        return (tau2 / 4.0) * (1.0 - np.maximum(0.0, 1.0 - s / tau2) ** 2)
    if kernel.kind == "geman-mcclure":
        return tau2 * s / (tau2 + s)
    if kernel.kind == "welsch":
        return (tau2 / 2.0) * (1.0 - np.exp(-s / tau2))
    raise AssertionError(kernel.kind)


def kernel_value(kernel: RobustKernel, r):
    """Robust cost psi(r) of a residual norm (vectorized)."""
    r = np.asarray(r, dtype=float)
    return _rho_of_square(kernel, r ** 2)


def kernel_cost_bound(kernel: RobustKernel) -> float | None:
    """Supremum of psi, or None for unbounded kernels."""
    tau2 = kernel.tau ** 2
    return {"none": None,
            "smooth-truncated-quadratic": tau2 / 4.0,
            "geman-mcclure": tau2,
            "welsch": tau2 / 2.0}[kernel.kind]


def irls_weight(kernel: RobustKernel, s):
    """IRLS weight w(s) = d psi(sqrt(s)) / d s at squared norm s."""
    s = np.asarray(s, dtype=float)
    tau2 = kernel.tau ** 2
    if kernel.kind == "none":
        return np.ones_like(s)
    if kernel.kind == "smooth-truncated-quadratic":
        return np.maximum(0.0, 1.0 - s / tau2) / 2.0
    if kernel.kind == "geman-mcclure":
        return tau2 ** 2 / (tau2 + s) ** 2
    if kernel.kind == "welsch":
        return np.exp(-s / tau2) / 2.0
    raise AssertionError(kernel.kind)


class RobustifiedModel(ResidualModel):
    """Reweighting wrapper that presents a robust problem as plain NLLS."""

    def __init__(self, base: ResidualModel, kernel: RobustKernel):
        self.base = base
        self.kernel = kernel
        self.n_residuals = base.n_residuals
        self.residual_dim = base.residual_dim
        self.param_dim = base.param_dim
        self.cost_upper_bound = kernel_cost_bound(kernel)

    def _weights(self, r: np.ndarray) -> np.ndarray:
        s = np.einsum("ij,ij->i", r, r)
        return np.sqrt(2.0 * irls_weight(self.kernel, s))

    def eval_blocks(self, indices, theta):
        r = self.base.eval_blocks(indices, theta)
        return r * self._weights(r)[:, None]

    def eval_blocks_with_jacobian(self, indices, theta):
        r, jac = self.base.eval_blocks_with_jacobian(indices, theta)
        scale = self._weights(r)
        return r * scale[:, None], jac * scale[:, None, None]

    def block_costs(self, indices, theta):
        r = self.base.eval_blocks(indices, theta)
        s = np.einsum("ij,ij->i", r, r)
        return _rho_of_square(self.kernel, s)

    def retract(self, theta, delta):
        return self.base.retract(theta, delta)

    def prepare(self, theta):
        self.base.prepare(theta)


def robustify(base: ResidualModel, kernel: RobustKernel) -> ResidualModel:
    """Wrap a model with a kernel; the none kernel is the identity."""
    if kernel.kind == "none":
        return base
    return RobustifiedModel(base, kernel)


def gnc_multipliers(levels: int) -> tuple[float, ...]:
    """Kernel scale multipliers, halving down to 1: 5 levels -> 16,8,4,2,1."""
    if levels < 1:
        raise ValueError("need at least one level")
    return tuple(float(2 ** (levels - 1 - i)) for i in range(levels))


def _rebase_trace(records: list[TraceRecord], iter0: int, ns0: int,
                  evals0: int) -> None:
    for rec in records:
        rec.iteration += iter0
        rec.wall_ns += ns0
        rec.evals_cum += evals0


def gnc_run(model: ResidualModel, kernel: RobustKernel, theta0,
            config: SolverConfig, levels: int = 5, method: str = "problm",
            run_id: str = "gnc", level_grad_tol: float = 1e-6) -> SolveResult:
    """Graduated non-convexity over a halving kernel-scale schedule.

    Each level wraps the base model with the kernel at tau * multiplier
    and solves to that level's gradient tolerance (the final level uses
    the configured one), warm-starting from the previous solution.  For
    the batched methods the permutation and batch size persist across
    levels while the cumulative relaxed statistic starts fresh.  The
    iteration cap applies per level; wall time is a global budget.
    Levels are separated by gnc-level-advance marker rows in the trace.
    """
    if kernel.kind == "none":
        raise ValueError("graduated non-convexity needs a robust kernel")
    if method not in ("lm", "problm", "problm-relaxed"):
        raise ValueError(f"unknown method {method!r}")
    clock = _Stopwatch()
    rng = np.random.default_rng(config.seed)
    batch: BatchState | None = None
    theta = theta0
    trace: list[TraceRecord] = []
    diagnostics: list[dict] = []
    evals = next_iter = 0
    initial_cost = float("nan")
    result = None
    for li, mult in enumerate(gnc_multipliers(levels)):
        level_model = robustify(model, RobustKernel(kernel.kind,
                                                    kernel.tau * mult))
        final_level = li == levels - 1
        # Intermediate levels only need a loose solve; never tighter than
        # the final tolerance the caller asked for.
        tol = config.grad_tol if final_level \
            else max(level_grad_tol, config.grad_tol)
        level_cfg = replace(config, grad_tol=tol)
        if config.time_budget_s is not None:
            remaining = config.time_budget_s - clock.seconds()
            if remaining <= 0.0:
                break
            level_cfg = replace(level_cfg, time_budget_s=remaining)
        level_start_ns = clock.ns()
        if method == "lm":
            result = classical_lm_run(level_model, theta, level_cfg, run_id)
        else:
            engine = _ProgressiveRun(level_model, theta, level_cfg,
                                     relaxed=(method == "problm-relaxed"),
                                     run_id=run_id, batch=batch, rng=rng)
            result = engine.run()
            batch = engine.batch
        theta = result.theta
        if li == 0:
            initial_cost = result.initial_cost
        _rebase_trace(result.trace, next_iter, level_start_ns, evals)
        trace.extend(result.trace)
        diagnostics.extend(result.diagnostics)
        next_iter += result.iterations
        evals += result.evals
        if not final_level:
            k_now = batch.batch_size if batch is not None \
                else model.n_residuals
            lam_now = trace[-1].lam if trace else 0.0
            trace.append(TraceRecord(run_id, next_iter, clock.ns(), k_now,
                                     lam_now, "gnc-level-advance",
                                     result.final_cost, None, evals))
            next_iter += 1
    assert result is not None
    return SolveResult(theta, result.final_cost, initial_cost, evals,
                       next_iter, result.converged, trace, diagnostics)
