"""Essential matrix refinement with the Sampson error.

The pose lives on SO(3) x S^2: a rotation plus a unit-norm translation
direction, giving the essential matrix E = hat(t) R.  Updates use a
5-dimensional tangent step (3 rotation components, 2 translation
components in an orthonormal basis of the sphere tangent), with
re-orthonormalization and re-normalization folded into every retraction
so chained updates cannot drift off the manifold.

Each correspondence contributes one scalar residual, the Sampson error

    r = x2' E x1 / sqrt((E x1)_1^2 + (E x1)_2^2 + (E' x2)_1^2 + (E' x2)_2^2)

in normalized camera coordinates.  Pairs whose denominator vanishes are
excluded from the active set (zero residual and Jacobian).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ResidualModel
from .geometry import (hat, project_so3, random_rotation, random_unit_vector,
                       so3_exp, so3_log, sphere_basis)

_DEGENERATE_DENOM = 1e-15


class EssentialState:
    """Rotation and unit translation with a 5-dimensional tangent space."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray):
        self.rotation = np.asarray(rotation, dtype=float)
        self.translation = np.asarray(translation, dtype=float)

    def plus(self, delta: np.ndarray) -> "EssentialState":
        """Apply a tangent step (omega, v) and re-project to the manifold."""
        omega, v = delta[:3], delta[3:]
        rotation = project_so3(so3_exp(omega) @ self.rotation)
        translation = self.translation + sphere_basis(self.translation) @ v
        translation = translation / np.linalg.norm(translation)
        return EssentialState(rotation, translation)

    @property
    def values(self) -> np.ndarray:
        """Diagnostic 5-vector: rotation log and translation angles."""
        t = self.translation
        return np.concatenate([so3_log(self.rotation),
                               [np.arctan2(t[1], t[0]),
                                np.arccos(np.clip(t[2], -1.0, 1.0))]])

    def essential_matrix(self) -> np.ndarray:
        return hat(self.translation) @ self.rotation

    def __repr__(self):
        return f"EssentialState(t={self.translation.round(4)})"


def essential_from_pose(rotation: np.ndarray, translation: np.ndarray
                        ) -> np.ndarray:
    """E = hat(t) R for a relative pose x2 ~ R x1 + t (t need not be unit)."""
    return hat(translation) @ rotation


def random_essential_state(rng: np.random.Generator) -> EssentialState:
    """Uniformly random pose on SO(3) x S^2, the benchmark starting point."""
    return EssentialState(random_rotation(rng), random_unit_vector(rng))


def perturb_essential_state(state: EssentialState, rng: np.random.Generator,
                            rot_scale: float = 0.05,
                            trans_scale: float = 0.05) -> EssentialState:
    delta = np.concatenate([rot_scale * rng.normal(size=3),
                            trans_scale * rng.normal(size=2)])
    return state.plus(delta)


class SampsonModel(ResidualModel):
    """Sampson-error residual blocks over a set of correspondences."""

    residual_dim = 1
    param_dim = 5

    def __init__(self, x1: np.ndarray, x2: np.ndarray):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if x1.shape != x2.shape or x1.ndim != 2 or x1.shape[1] != 2:
            raise ValueError("correspondences must be matching (n, 2) arrays")
        if len(x1) < 8:
            raise ValueError("need at least 8 correspondences")
        # NaN would otherwise fail the denominator comparison and alias
        # into the degenerate-pair exclusion, silently zeroing blocks.
        if not (np.isfinite(x1).all() and np.isfinite(x2).all()):
            raise ValueError("correspondences must be finite")
        n = len(x1)
        self.x1h = np.column_stack([x1, np.ones(n)])
        self.x2h = np.column_stack([x2, np.ones(n)])
        self.n_residuals = n

    def retract(self, theta: EssentialState, delta: np.ndarray):
        return theta.plus(delta)

    def _core(self, indices, theta):
        E = theta.essential_matrix()
        X1 = self.x1h[indices]
        X2 = self.x2h[indices]
        Ex1 = X1 @ E.T
        Etx2 = X2 @ E
        num = np.einsum("ij,ij->i", X2, Ex1)
        q = Ex1[:, 0] ** 2 + Ex1[:, 1] ** 2 + Etx2[:, 0] ** 2 + Etx2[:, 1] ** 2
        denom = np.sqrt(q)
        valid = denom > _DEGENERATE_DENOM
        r = np.zeros(len(X1))
        np.divide(num, denom, out=r, where=valid)
        return E, X1, X2, Ex1, Etx2, r, denom, valid

    def eval_blocks(self, indices, theta):
        _, _, _, _, _, r, _, _ = self._core(indices, theta)
        return r[:, None]

    def eval_blocks_with_jacobian(self, indices, theta):
        E, X1, X2, Ex1, Etx2, r, denom, valid = self._core(indices, theta)
        # Directional derivatives of E along the 5 tangent basis vectors:
        # rotation span hat(t) hat(e_k) R, translation span hat(B_m) R.
        R, t = theta.rotation, theta.translation
        ht = hat(t)
        B = sphere_basis(t)
        dE = np.empty((5, 3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            dE[k] = ht @ hat(e) @ R
        dE[3] = hat(B[:, 0]) @ R
        dE[4] = hat(B[:, 1]) @ R
        dEx1 = np.einsum("kab,mb->mka", dE, X1)
        dEtx2 = np.einsum("kab,ma->mkb", dE, X2)
        dnum = np.einsum("ma,mka->mk", X2, dEx1)
        dq = 2.0 * (Ex1[:, None, 0] * dEx1[:, :, 0]
                    + Ex1[:, None, 1] * dEx1[:, :, 1]
                    + Etx2[:, None, 0] * dEtx2[:, :, 0]
                    + Etx2[:, None, 1] * dEtx2[:, :, 1])
        jac = np.zeros((len(X1), 1, 5))
        d = denom[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            full = (dnum - r[:, None] * dq / (2.0 * d)) / d
        jac[valid, 0, :] = full[valid]
        return r[:, None], jac

    def n_degenerate(self, theta) -> int:
        """Pairs currently excluded for a vanishing Sampson denominator."""
        _, _, _, _, _, _, _, valid = self._core(
            np.arange(self.n_residuals), theta)
        return int((~valid).sum())


@dataclass
class EssentialInstance:
    """Synthetic two-view correspondence set with ground truth."""

    x1: np.ndarray
    x2: np.ndarray
    inlier_mask: np.ndarray
    state_true: EssentialState
    noise: float
    outlier_fraction: float
    seed: int

    @property
    def n(self) -> int:
        return len(self.x1)

    def model(self) -> SampsonModel:
        return SampsonModel(self.x1, self.x2)


def generate_essential_instance(seed: int, n: int, noise: float = 1e-3,
                                outlier_fraction: float = 0.0
                                ) -> EssentialInstance:
    """Random relative pose observed through noisy correspondences.

    Scene points sit in a frustum 4 to 8 units deep; the second camera is
    displaced by a baseline of 0.5 to 1 and rotated by 0.1 to 0.3 rad.
    Gaussian noise is added to both projections.  A fixed round(n *
    outlier_fraction) of the matches are replaced by uniform random
    points in the field of view; the mask marks the surviving inliers.
    """
    if n < 8:
        raise ValueError("need at least 8 correspondences")
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError("outlier_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    axis = random_unit_vector(rng)
    angle = rng.uniform(0.1, 0.3)
    R = so3_exp(angle * axis)
    t_dir = random_unit_vector(rng)
    t_vec = rng.uniform(0.5, 1.0) * t_dir

    x1 = np.empty((n, 2))
    x2 = np.empty((n, 2))
    have = 0
    while have < n:
        m = 2 * (n - have)
        z = rng.uniform(4.0, 8.0, m)
        u = rng.uniform(-0.4, 0.4, m)
        v = rng.uniform(-0.4, 0.4, m)
        X = np.column_stack([u * z, v * z, z])
        Y = X @ R.T + t_vec
        ok = (Y[:, 2] > 1.0) \
            & (np.abs(Y[:, 0] / Y[:, 2]) < 0.6) \
            & (np.abs(Y[:, 1] / Y[:, 2]) < 0.6)
        X, Y = X[ok], Y[ok]
        take = min(n - have, len(X))
        x1[have:have + take] = X[:take, :2] / X[:take, 2:]
        x2[have:have + take] = Y[:take, :2] / Y[:take, 2:]
        have += take
    x1 += rng.normal(0.0, noise, x1.shape)
    x2 += rng.normal(0.0, noise, x2.shape)

    inlier_mask = np.ones(n, dtype=bool)
    n_out = round(outlier_fraction * n)
    if n_out:
        out_idx = rng.choice(n, size=n_out, replace=False)
        x2[out_idx] = rng.uniform(-0.45, 0.45, (n_out, 2))
        inlier_mask[out_idx] = False

    state = EssentialState(R, t_vec / np.linalg.norm(t_vec))
    return EssentialInstance(x1, x2, inlier_mask, state, noise,
                             outlier_fraction, seed)
