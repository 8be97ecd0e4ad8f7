"""Progressive-batching Levenberg-Marquardt and its benchmark problems.

The solvers minimize sums of squared residual blocks.  ``classical_lm_run``
is the deterministic full-batch baseline; ``problm_run`` evaluates only a
growing random prefix of the blocks and accepts steps through a Hoeffding
sufficient-reduction test, and ``problm_relaxed_run`` trades some of that
per-step soundness for fewer evaluations.  ``gnc_run`` wraps any of them
in a graduated non-convexity schedule over a robust kernel.
"""

from .core import (NormalEquations, NumericalFailure, SolveResult,
                   SolverConfig, TraceRecord, build_normal_equations,
                   classical_lm_run, initial_lambda, solve_damped_step)
from .model import (EvaluationError, InvalidStartError, ResidualModel,
                    UnderdeterminedPointError, finite_difference_jacobian)
from .progressive import (BatchState, BoundEstimates, ReductionStats,
                          clamped_reduction, confidence_from_failure_rate,
                          estimate_lower_bound_a, estimate_upper_bound_b,
                          hoeffding_tail_bound, hoeffding_threshold,
                          init_batch, next_batch_size, problm_relaxed_run,
                          problm_run, relaxed_step_decision,
                          sufficient_reduction_test)
from .robust import (RobustKernel, RobustifiedModel, gnc_multipliers,
                     gnc_run, irls_weight, kernel_cost_bound, kernel_value,
                     robustify)

__version__ = "0.1.0"

__all__ = [
    "BatchState", "BoundEstimates", "EvaluationError", "InvalidStartError",
    "NormalEquations", "NumericalFailure", "ReductionStats", "ResidualModel",
    "RobustKernel", "RobustifiedModel", "SolveResult", "SolverConfig",
    "TraceRecord", "UnderdeterminedPointError", "build_normal_equations",
    "clamped_reduction", "classical_lm_run", "confidence_from_failure_rate",
    "estimate_lower_bound_a", "estimate_upper_bound_b",
    "finite_difference_jacobian", "gnc_multipliers", "gnc_run",
    "hoeffding_tail_bound", "hoeffding_threshold", "init_batch",
    "initial_lambda", "irls_weight", "kernel_cost_bound", "kernel_value",
    "next_batch_size", "problm_relaxed_run", "problm_run", "relaxed_step_decision",
    "robustify", "solve_damped_step", "sufficient_reduction_test",
]
