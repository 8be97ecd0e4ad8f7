"""Residual-block model contract shared by every solver in this package.

A problem is a collection of N residual blocks r_i(theta) in R^p with
Jacobians J_i in R^{p x d}.  The total cost is

    f(theta) = sum_i f_i(theta),   f_i = ||r_i(theta)||^2

and solvers only ever talk to a problem through this interface: evaluate
blocks, evaluate blocks with Jacobians, and advance parameters through
``retract``.  Parameters are opaque to the solvers.  Euclidean problems
use plain ndarrays of length d; manifold problems supply their own state
object and override ``retract`` so that steps live in a d-dimensional
tangent space.
"""

from __future__ import annotations

import numpy as np


class EvaluationError(RuntimeError):
    """A residual or Jacobian evaluation produced a non-finite entry."""

    def __init__(self, index: int, detail: str = ""):
        self.index = int(index)
        msg = f"non-finite evaluation at residual block {index}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class InvalidStartError(RuntimeError):
    """The starting point has non-finite cost; the solve cannot begin."""


class UnderdeterminedPointError(RuntimeError):
    """A closed-form point solve has fewer constraints than unknowns."""


class ResidualModel:
    """Base class for residual-block problems.

    Subclasses set ``n_residuals``, ``residual_dim`` (p) and ``param_dim``
    (d) and implement the two vectorized evaluation methods.  The single
    block accessors and ``block_costs`` are derived from those.  All
    evaluation is deterministic; models hold no per-solve state except
    where ``prepare`` is documented to refresh internal caches (bundle
    adjustment re-solves its structure points there).
    """

    n_residuals: int
    residual_dim: int
    param_dim: int

    # Finite value => per-block costs are bounded above by this constant
    # (robust kernels).  None => unbounded, solvers fall back to a
    # Lipschitz-style range estimate.
    cost_upper_bound: float | None = None

    def eval_blocks(self, indices: np.ndarray, theta) -> np.ndarray:
        """Residuals for the given block indices, shape (m, p)."""
        raise NotImplementedError

    def eval_blocks_with_jacobian(self, indices: np.ndarray, theta):
        """Residuals (m, p) and Jacobians (m, p, d) for the given blocks."""
        raise NotImplementedError

    def block_costs(self, indices: np.ndarray, theta) -> np.ndarray:
        """Per-block costs f_i = ||r_i||^2, shape (m,)."""
        r = self.eval_blocks(indices, theta)
        return np.einsum("ij,ij->i", r, r)

    def retract(self, theta, delta: np.ndarray):
        """Apply a d-dimensional step.  Default is plain addition."""
        return theta + delta

    def prepare(self, theta) -> None:
        """Hook called once per solver iteration at the current iterate.

        Stateless models ignore it.
        """

    def eval(self, i: int, theta) -> np.ndarray:
        return self.eval_blocks(np.asarray([i]), theta)[0]

    def eval_with_jacobian(self, i: int, theta):
        r, jac = self.eval_blocks_with_jacobian(np.asarray([i]), theta)
        return r[0], jac[0]

    def total_cost(self, theta, indices: np.ndarray | None = None) -> float:
        if indices is None:
            indices = np.arange(self.n_residuals)
        return float(np.sum(self.block_costs(indices, theta)))


def finite_difference_jacobian(model: ResidualModel, i: int, theta,
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of block i through the model's retraction.

    Steps are taken along the d tangent basis directions with size
    step * max(1, |theta_j|) for Euclidean parameters and plain ``step``
    for manifold states.  Used by tests as the independent check against
    analytic Jacobians.
    """
    d = model.param_dim
    r0 = model.eval(i, theta)
    jac = np.zeros((r0.size, d))
    euclidean = isinstance(theta, np.ndarray)
    for j in range(d):
        h = step * max(1.0, abs(float(theta[j]))) if euclidean else step
        e = np.zeros(d)
        e[j] = h
        r_plus = model.eval(i, model.retract(theta, e))
        r_minus = model.eval(i, model.retract(theta, -e))
        jac[:, j] = (r_plus - r_minus) / (2.0 * h)
    return jac
