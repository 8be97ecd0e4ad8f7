"""Progressive-batching Levenberg-Marquardt with a statistical step test.

Instead of evaluating every residual block each iteration, the solver
works on a prefix S of a fixed random permutation of the blocks and asks
whether the observed batch reduction is statistically sufficient to
conclude the expected full reduction is negative.  With per-block
reductions Y_k = f_k(theta_new) - f_k(theta_old) clamped from below,

    Z_k = max(a, Y_k),          S_K = sum_k Z_k,

Hoeffding's inequality bounds the chance that the true expected sum sits
above a fraction alpha of the observed one, which yields the acceptance
condition

    S_K <= -((b - a) / (1 - alpha)) * sqrt(-K log(delta) / 2).

Each iteration ends in one of three ways: the batch cost went up
(failure: revert, raise lambda), it went down but not convincingly
(insufficient: revert, grow the batch), or the test passed (success:
keep the step, lower lambda).  On insufficient steps the batch grows to

    K+ = min(N, ceil(-K^2 (b-a)^2 log(delta) / (2 S_K^2 (1-alpha)^2)))

with a floor that forces strict geometric growth.  Once K = N the sample
mean is the true mean, the test is bypassed, and the solver behaves
exactly like classical Levenberg-Marquardt.

The relaxed variant accumulates reductions against the iterate at which
the batch was last grown and may keep an unconvincing step anyway with
probability eta, trading guaranteed per-step soundness for fewer
evaluations; see ``problm_relaxed_run``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (DampingState, NumericalFailure, SolveResult, SolverConfig,
                   TraceRecord, _Stopwatch, build_normal_equations,
                   initial_lambda, solve_damped_step)
from .model import EvaluationError, InvalidStartError, ResidualModel

SUCCESS = "success"
FAILURE = "failure"
INSUFFICIENT = "insufficient"

# Clamp floor used when no negative reduction is observed.  The test then
# degenerates and the step is handled as a failure upstream.
_SENTINEL_A = -1e-12


@dataclass
class BatchState:
    """Prefix batch over a fixed random permutation of the blocks.

    The active batch is always the first ``batch_size`` entries of
    ``permutation``; growing the batch extends the prefix and never
    reshuffles, so batches are nested.  ``epoch_start`` and ``u_k`` are
    bookkeeping for the relaxed variant's cumulative statistic.
    """

    permutation: np.ndarray
    batch_size: int
    epoch_start: int = 0
    u_k: float = 0.0

    @property
    def n_total(self) -> int:
        return self.permutation.size

    def indices(self) -> np.ndarray:
        """Active block indices in sorted order (stable accumulation)."""
        return np.sort(self.permutation[: self.batch_size])

    def grow(self, new_size: int) -> np.ndarray:
        """Extend the prefix to ``new_size``; returns the added indices."""
        if not self.batch_size < new_size <= self.n_total:
            raise ValueError("batch size must grow monotonically up to N")
        added = self.permutation[self.batch_size: new_size].copy()
        self.batch_size = new_size
        return added


def init_batch(n_residuals: int, k0_fraction: float, seed: int,
               min_batch: int = 1) -> BatchState:
    """Seeded initial batch: K = max(min_batch, ceil(k0_fraction * N)), <= N."""
    rng = np.random.default_rng(seed)
    return _init_batch_from_rng(n_residuals, k0_fraction, rng, min_batch)


def _init_batch_from_rng(n_residuals, k0_fraction, rng, min_batch=1):
    if n_residuals < 1:
        raise ValueError("need at least one residual block")
    k = max(int(min_batch), math.ceil(k0_fraction * n_residuals))
    k = min(k, n_residuals)
    return BatchState(rng.permutation(n_residuals), k)


@dataclass
class ReductionStats:
    """Per-block reductions and their clamped sum for one trial step."""

    y: np.ndarray        # raw reductions f_i(new) - f_i(old)
    clamp_floor: float   # a
    s_k: float           # sum of max(a, y)
    raw_sum: float       # unclamped sum = batch cost change


def clamped_reduction(y: np.ndarray, a: float) -> ReductionStats:
    """Clamp reductions from below at a (a <= 0) and sum them."""
    if a > 0.0:
        raise ValueError("clamp floor a must be <= 0")
    y = np.asarray(y, dtype=float)
    z = np.maximum(a, y)
    return ReductionStats(y, a, float(z.sum()), float(y.sum()))


def hoeffding_threshold(k: int, a: float, b: float, alpha: float,
                        delta: float) -> float:
    """Largest clamped sum the test accepts at confidence delta.

    Negative for any valid inputs.  A degenerate span b <= a returns 0,
    which makes any strict reduction acceptable; callers treat that case
    explicitly.
    """
    if k < 1:
        raise ValueError("batch size must be positive")
    if not 0.0 < alpha < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("alpha and delta must lie in (0, 1)")
    span = b - a
    if span <= 0.0:
        return 0.0
    return -(span / (1.0 - alpha)) * math.sqrt(-k * math.log(delta) / 2.0)


def hoeffding_tail_bound(deviation: float, k: int, span: float) -> float:
    """P(sum deviates from its mean by >= deviation), K iid terms in a span."""
    if deviation <= 0.0 or span <= 0.0 or k < 1:
        raise ValueError("deviation, span and k must be positive")
    return math.exp(-2.0 * deviation ** 2 / (k * span ** 2))


def sufficient_reduction_test(s_k: float, k: int, a: float, b: float,
                              alpha: float, delta: float,
                              full_batch: bool) -> str:
    """Three-way step outcome from the clamped reduction sum.

    With the full batch active the sample mean is exact and any strict
    reduction is a success; no statistics are involved.
    """
    if s_k >= 0.0:
        return FAILURE
    if full_batch:
        return SUCCESS
    threshold = hoeffding_threshold(k, a, b, alpha, delta)
    if threshold == 0.0:
        return SUCCESS  # degenerate span, s_k < 0 already established
    return SUCCESS if s_k <= threshold else INSUFFICIENT


def next_batch_size(k: int, s_or_u: float, a: float, b: float, alpha: float,
                    delta: float, n_total: int) -> int:
    """Batch size that would have made the observed reduction sufficient.

    Inverts the acceptance condition for K and applies a growth floor of
    max(K + 1, ceil(1.1 K)) so the batch always grows strictly, then
    clamps to N.  Requires a strictly negative statistic.
    """
    if s_or_u >= 0.0:
        raise ValueError("batch growth needs a negative reduction statistic")
    span = b - a
    formula = -(k ** 2) * span ** 2 * math.log(delta) / \
        (2.0 * s_or_u ** 2 * (1.0 - alpha) ** 2)
    # ceil(1.1 K) in exact integer arithmetic; 1.1 * 100 rounds up in binary.
    k_plus = max(math.ceil(formula), k + 1, -(-11 * k // 10))
    return min(n_total, k_plus)


@dataclass
class BoundEstimates:
    """Clamp floor a and reduction upper bound b with their provenance."""

    a: float
    b: float
    source: str  # "robust-range" or "lipschitz"


def estimate_upper_bound_b(y: np.ndarray, cost_upper_bound: float | None,
                           previous_b: float | None = None,
                           safety: float = 1.0) -> tuple[float, str]:
    """Upper bound on a single block's cost increase.

    With a bounded robust kernel the worst case is a block going from
    zero cost to the kernel ceiling, so b is the ceiling itself.
    Otherwise a local Lipschitz estimate is used: L_f = max|y_i| / |step|
    times the step length, which collapses to max|y_i|.  A degenerate
    all-zero batch reuses the previous bound when one exists.
    """
    if cost_upper_bound is not None:
        return float(cost_upper_bound) * safety, "robust-range"
    b = float(np.max(np.abs(y))) if len(y) else 0.0
    if b == 0.0 and previous_b is not None:
        return previous_b, "lipschitz"
    return b * safety, "lipschitz"


def estimate_lower_bound_a(y: np.ndarray, b: float, alpha: float,
                           delta: float) -> float:
    """Clamp floor chosen from the observed negative reductions.

    Each negative reduction is tried as the floor and the one that makes
    the acceptance test most favourable (smallest S_K(a) minus threshold)
    wins; ties go to the larger floor, which clamps more aggressively.
    Only floors that keep the clamped sum negative are eligible: the
    clamped sum is what classifies the step, so a floor that erases an
    observed decrease would turn a descending step into a rejection.
    The floor min(y) always qualifies when the raw sum is negative, so
    eligibility fails only when the step increased the batch cost, and
    then the tiny sentinel is returned so the caller lands in the
    failure branch.
    """
    y = np.asarray(y, dtype=float)
    candidates = np.unique(y[y < 0.0])
    if candidates.size == 0:
        return _SENTINEL_A
    k = y.size
    best_a, best_margin = None, None
    for a in candidates[::-1]:  # descending: ties keep the larger floor
        s_k = float(np.maximum(a, y).sum())
        if s_k >= 0.0:
            continue
        margin = s_k - hoeffding_threshold(k, float(a), b, alpha, delta)
        if best_margin is None or margin < best_margin:
            best_a, best_margin = float(a), margin
    if best_a is None:
        return _SENTINEL_A
    return best_a


def confidence_from_failure_rate(t_s: int, eta0: float) -> float:
    """Per-step confidence delta so T_S steps fail jointly with rate eta0.

    Solves (1 - delta)^T_S = 1 - eta0 for delta.
    """
    if t_s < 1:
        raise ValueError("step count must be positive")
    if not 0.0 < eta0 < 1.0:
        raise ValueError("eta0 must lie in (0, 1)")
    return 1.0 - (1.0 - eta0) ** (1.0 / t_s)


def relaxed_step_decision(u_k: float, threshold: float, eta: float,
                          rng: np.random.Generator) -> str:
    """Relaxed acceptance: pass the test, or keep the step with prob eta.

    Returns "success", "temporary" or "grow".  The uniform draw happens
    only when the threshold test fails, so a fixed generator yields a
    reproducible decision stream.
    """
    passed = u_k < 0.0 if threshold == 0.0 else u_k <= threshold
    if passed:
        return "success"
    if eta > 0.0 and rng.uniform() <= eta:
        return "temporary"
    return "grow"


class _ProgressiveRun:
    """One batched solve; shared engine for the strict and relaxed variants."""

    def __init__(self, model: ResidualModel, theta0, config: SolverConfig,
                 relaxed: bool, run_id: str,
                 batch: BatchState | None = None,
                 rng: np.random.Generator | None = None,
                 damping: DampingState | None = None):
        self.model = model
        self.config = config
        self.relaxed = relaxed
        self.run_id = run_id
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        n = model.n_residuals
        if batch is None:
            batch = _init_batch_from_rng(n, config.k0_fraction, self.rng,
                                         min_batch=model.param_dim + 1)
        self.batch = batch
        self.theta = theta0
        self.clock = _Stopwatch()
        self.evals = 0
        self.trace: list[TraceRecord] = []
        self.diagnostics: list[dict] = []
        # Per-block costs at the current iterate, indexed by block id.
        self.cost_by_index = np.full(n, np.nan)
        self.epoch_costs = np.full(n, np.nan) if relaxed else None
        self.previous_b: float | None = None
        self.damping = damping
        self.iteration = 0
        self.converged = False
        self._lam_used = float("nan")
        self._k_used = batch.batch_size

    # -- state helpers ---------------------------------------------------

    def _rebuild(self) -> None:
        """Normal equations and block costs over the batch at theta."""
        idx = self.batch.indices()
        self.model.prepare(self.theta)
        self.ne, costs = build_normal_equations(self.model, idx, self.theta)
        self.cost_by_index[idx] = costs
        self.evals += idx.size

    def _extend(self, new_size: int) -> None:
        """Grow the batch and fold the new blocks into the cached system."""
        added = np.sort(self.batch.grow(new_size))
        ne_add, costs = build_normal_equations(self.model, added, self.theta)
        self.ne.g += ne_add.g
        self.ne.H += ne_add.H
        self.ne.cost += ne_add.cost
        self.ne.n_blocks += ne_add.n_blocks
        self.cost_by_index[added] = costs
        self.evals += added.size
        if self.relaxed:
            # New epoch starts at the current iterate over the wider batch.
            self.epoch_costs[self.batch.indices()] = \
                self.cost_by_index[self.batch.indices()]
            self.batch.epoch_start = self.iteration + 1

    def _record(self, outcome: str, batch_cost: float,
                full_cost: float | None) -> None:
        self.trace.append(TraceRecord(
            self.run_id, self.iteration, self.clock.ns(),
            self._k_used, self._lam_used, outcome,
            batch_cost, full_cost, self.evals))

    def _out_of_budget(self) -> bool:
        if self.iteration >= self.config.max_iter:
            return True
        budget = self.config.time_budget_s
        return budget is not None and self.clock.seconds() >= budget

    # -- main loop -------------------------------------------------------

    def run(self) -> SolveResult:
        cfg = self.config
        self._rebuild()
        if not np.isfinite(self.ne.cost):
            raise InvalidStartError("non-finite cost at the starting point")
        if self.damping is None:
            lam0 = cfg.lambda_init if cfg.lambda_init is not None \
                else initial_lambda(self.ne.H)
            self.damping = DampingState(lam0, cfg.lambda_up, cfg.lambda_down)
        if self.relaxed:
            idx = self.batch.indices()
            self.epoch_costs[idx] = self.cost_by_index[idx]
        initial_full = self.model.total_cost(self.theta) if cfg.audit else None

        while not self._out_of_budget():
            full_batch = self.batch.batch_size == self.batch.n_total
            if np.max(np.abs(self.ne.g)) <= cfg.grad_tol:
                if full_batch:
                    self.converged = True
                    break
                # A batch optimum at K < N says nothing about the rest of
                # the objective; steps from here are null, so the only way
                # forward is more data.  Grow by the floor schedule.
                self._k_used = k = self.batch.batch_size
                self._lam_used = self.damping.lam
                self._extend(min(self.batch.n_total,
                                 max(k + 1, -(-11 * k // 10))))
                self._record(INSUFFICIENT,
                             float(self.cost_by_index[
                                 self.batch.indices()].sum()), None)
                self.iteration += 1
                continue
            self._step(full_batch)
            self.iteration += 1

        final_cost = self.model.total_cost(self.theta)
        return SolveResult(self.theta, final_cost,
                           initial_full if initial_full is not None
                           else float("nan"),
                           self.evals, self.iteration, self.converged,
                           self.trace, self.diagnostics)

    def _step(self, full_batch: bool) -> None:
        cfg = self.config
        idx = self.batch.indices()
        k = idx.size
        # Traces carry the damping and batch size actually used for the
        # step, not the values left behind by the outcome update.
        self._lam_used = self.damping.lam
        self._k_used = k
        try:
            delta = solve_damped_step(self.ne, self._lam_used)
        except NumericalFailure:
            self.damping.increase()
            self._record(FAILURE, self.ne.cost, None)
            return
        theta_new = self.model.retract(self.theta, delta)
        f_new = self.model.block_costs(idx, theta_new)
        if not np.isfinite(f_new).all():
            raise EvaluationError(idx[int(np.argmax(~np.isfinite(f_new)))],
                                  "trial cost")
        f_cur = self.cost_by_index[idx]
        y_step = f_new - f_cur

        if self.relaxed and not full_batch:
            self._relaxed_step(idx, k, f_new, y_step, theta_new)
        else:
            self._strict_step(idx, k, f_new, y_step, theta_new, full_batch)

    # -- strict variant --------------------------------------------------

    def _strict_step(self, idx, k, f_new, y_step, theta_new, full_batch):
        cfg = self.config
        if full_batch:
            # Exact sample mean: plain descent test, no clamping involved.
            # Costs are compared as summed totals, the same arithmetic the
            # classical loop uses, so a K = N run reproduces it decision
            # for decision.
            s_k = float(y_step.sum())
            a = b = threshold = None
            decreased = float(f_new.sum()) < float(self.cost_by_index[idx].sum())
            outcome = SUCCESS if decreased else FAILURE
        else:
            b, b_source = estimate_upper_bound_b(
                y_step, self.model.cost_upper_bound, self.previous_b,
                cfg.bound_safety)
            if b > 0.0:
                self.previous_b = b
            a = estimate_lower_bound_a(y_step, b, cfg.alpha, cfg.delta)
            stats = clamped_reduction(y_step, a)
            s_k = stats.s_k
            threshold = hoeffding_threshold(k, a, b, cfg.alpha, cfg.delta)
            outcome = sufficient_reduction_test(s_k, k, a, b, cfg.alpha,
                                                cfg.delta, full_batch=False)
        self.diagnostics.append(dict(
            iteration=self.iteration, k=k, outcome=outcome, s_k=s_k,
            raw_sum=float(y_step.sum()), a=a, b=b, threshold=threshold,
            lam=self.damping.lam))
        if outcome == SUCCESS:
            self._accept(theta_new)
        elif outcome == FAILURE:
            self.damping.increase()
            self._record(FAILURE, float(self.cost_by_index[idx].sum()), None)
        else:
            new_size = next_batch_size(k, s_k, a, b, cfg.alpha, cfg.delta,
                                       self.batch.n_total)
            self._extend(new_size)
            self._record(INSUFFICIENT,
                         float(self.cost_by_index[self.batch.indices()].sum()),
                         None)

    def _accept(self, theta_new) -> None:
        self.theta = theta_new
        self._rebuild()
        # Record the standing cost after the rebuild so that models whose
        # prepare() refreshes internal state trace the same numbers the
        # classical loop would.
        full = self.model.total_cost(self.theta) if self.config.audit else None
        self._record(SUCCESS, self.ne.cost, full)
        self.damping.decrease()

    # -- relaxed variant -------------------------------------------------

    def _relaxed_step(self, idx, k, f_new, y_step, theta_new):
        """One relaxed iteration: accumulate reductions against the epoch base.

        The per-step guard comes first: a batch cost increase is a plain
        failure.  Otherwise the cumulative statistic U_K, measured
        against the iterate at which this batch was formed, decides; an
        unconvincing step may still be kept with probability eta.  A
        rejected step grows the batch and opens a new epoch at the
        current iterate.  Progress kept through temporary acceptances is
        never rolled back.
        """
        cfg = self.config
        if float(y_step.sum()) >= 0.0:
            self.damping.increase()
            self._record(FAILURE, float(self.cost_by_index[idx].sum()), None)
            return
        w = f_new - self.epoch_costs[idx]
        b, _ = estimate_upper_bound_b(w, self.model.cost_upper_bound,
                                      self.previous_b, cfg.bound_safety)
        if b > 0.0:
            self.previous_b = b
        a = estimate_lower_bound_a(w, b, cfg.alpha, cfg.delta)
        u_k = float(np.maximum(a, w).sum())
        self.batch.u_k = u_k
        threshold = hoeffding_threshold(k, a, b, cfg.alpha, cfg.delta)
        decision = relaxed_step_decision(u_k, threshold, cfg.eta, self.rng)
        self.diagnostics.append(dict(
            iteration=self.iteration, k=k, outcome=decision, u_k=u_k,
            raw_sum=float(y_step.sum()), a=a, b=b, threshold=threshold,
            lam=self.damping.lam))
        if decision in ("success", "temporary"):
            self._accept(theta_new)
        elif u_k < 0.0:
            new_size = next_batch_size(k, u_k, a, b, cfg.alpha, cfg.delta,
                                       self.batch.n_total)
            self._extend(new_size)
            self._record(INSUFFICIENT,
                         float(self.cost_by_index[self.batch.indices()].sum()),
                         None)
        else:
            # Cumulative statistic is non-negative: growth is undefined, so
            # treat the step as a failure and restart the epoch here.
            self.damping.increase()
            self.epoch_costs[idx] = self.cost_by_index[idx]
            self.batch.epoch_start = self.iteration + 1
            self._record(FAILURE, float(self.cost_by_index[idx].sum()), None)


def problm_run(model: ResidualModel, theta0, config: SolverConfig,
               run_id: str = "problm") -> SolveResult:
    """Strict progressive-batching solve; every kept step passed the test."""
    return _ProgressiveRun(model, theta0, config, relaxed=False,
                           run_id=run_id).run()


def problm_relaxed_run(model: ResidualModel, theta0, config: SolverConfig,
                       run_id: str = "problm-relaxed") -> SolveResult:
    """Relaxed progressive-batching solve with temporary acceptance."""
    return _ProgressiveRun(model, theta0, config, relaxed=True,
                           run_id=run_id).run()
