"""Shared tiny models for solver tests."""

import numpy as np

from probatch.model import ResidualModel


class LinearModel(ResidualModel):
    """Residual blocks r_i = A_i theta - b_i; the NLLS problem is a linear
    least squares in disguise, so the solution is known in closed form."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        # A: (N, p, d), b: (N, p)
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n_residuals = self.A.shape[0]
        self.residual_dim = self.A.shape[1]
        self.param_dim = self.A.shape[2]

    def eval_blocks(self, indices, theta):
        return self.A[indices] @ theta - self.b[indices]

    def eval_blocks_with_jacobian(self, indices, theta):
        return self.eval_blocks(indices, theta), self.A[indices].copy()

    def solution(self):
        A = self.A.reshape(-1, self.param_dim)
        b = self.b.reshape(-1)
        return np.linalg.lstsq(A, b, rcond=None)[0]


def random_linear_model(rng, n=40, p=2, d=3):
    A = rng.standard_normal((n, p, d))
    b = rng.standard_normal((n, p))
    return LinearModel(A, b)
