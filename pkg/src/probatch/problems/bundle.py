"""Small weak-perspective bundle adjustment with variable projection.

Cameras C >= 2 observe P points, every point visible in every camera.
The weak-perspective projection of a camera-frame point Y divides by a
fixed per-point average depth instead of Y's own third coordinate:

    pi(Y; depth_j) = (Y_1 / depth_j, Y_2 / depth_j)

which makes the image measurements linear in the 3-d point.  The solver
optimizes camera poses only; before each evaluation epoch (the
``prepare`` hook) all points are re-solved in closed form from the
current cameras, each a tiny 3x3 normal-equation solve.  Within an epoch
the points are frozen, so block Jacobians are plain pose derivatives.

The first camera is pinned to its initial pose as the gauge; parameters
cover cameras 2..C, six each (a rotation tangent and a translation), so
d = 6 (C - 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ResidualModel, UnderdeterminedPointError
from .geometry import hat, project_so3, so3_exp

_ABS_SINGULAR = 1e-12


def weak_perspective_project(Y: np.ndarray, depth: float) -> np.ndarray:
    """Project camera-frame points (…, 3) by the fixed average depth."""
    Y = np.asarray(Y, dtype=float)
    return Y[..., :2] / depth


class BundleCameras:
    """C camera poses; the first is the fixed gauge, the rest are free.

    The tangent step is 6 numbers per free camera: a rotation update
    applied on the left of the current rotation, then the translation
    offset.  Retraction re-projects each rotation to SO(3).
    """

    __slots__ = ("rotations", "translations")

    def __init__(self, rotations: np.ndarray, translations: np.ndarray):
        self.rotations = np.asarray(rotations, dtype=float)
        self.translations = np.asarray(translations, dtype=float)
        if self.rotations.shape[0] < 2:
            raise ValueError("need at least two cameras")

    @property
    def n_cameras(self) -> int:
        return self.rotations.shape[0]

    @property
    def dim(self) -> int:
        return 6 * (self.n_cameras - 1)

    def plus(self, delta: np.ndarray) -> "BundleCameras":
        if len(delta) != self.dim:
            raise ValueError(f"step must have length {self.dim}")
        rotations = self.rotations.copy()
        translations = self.translations.copy()
        for i in range(1, self.n_cameras):
            d = delta[6 * (i - 1): 6 * i]
            rotations[i] = project_so3(so3_exp(d[:3]) @ rotations[i])
            translations[i] = translations[i] + d[3:]
        return BundleCameras(rotations, translations)


def varpro_point_solve(rotations: np.ndarray, translations: np.ndarray,
                       observations: np.ndarray, depth: float) -> np.ndarray:
    """Closed-form 3-d point minimizing its reprojection cost.

    Stacks the two linear equations each camera contributes and solves
    the 3x3 normal system.  Raises UnderdeterminedPointError when fewer
    than two cameras constrain the point or the system is singular.
    """
    C = rotations.shape[0]
    if 2 * C < 3:
        raise UnderdeterminedPointError(
            f"{C} camera(s) give {2 * C} equations for 3 unknowns")
    A = rotations[:, :2, :].reshape(2 * C, 3) / depth
    b = (observations - translations[:, :2] / depth).reshape(2 * C)
    G = A.T @ A
    if abs(np.linalg.det(G)) < _ABS_SINGULAR:
        raise UnderdeterminedPointError("degenerate camera configuration")
    return np.linalg.solve(G, A.T @ b)


class WeakPerspectiveModel(ResidualModel):
    """Residual blocks indexed by (camera, point): id = camera * P + point.

    ``prepare`` re-solves every point from the given cameras and caches
    them; evaluations then use the cached points, so the model behaves as
    a fixed camera-only least-squares problem between prepares.
    Construct one model per solver run: the point cache is mutable state.
    """

    residual_dim = 2

    def __init__(self, observations: np.ndarray, depths: np.ndarray):
        observations = np.asarray(observations, dtype=float)
        if observations.ndim != 3 or observations.shape[2] != 2:
            raise ValueError("observations must have shape (C, P, 2)")
        C, P = observations.shape[:2]
        if C < 2:
            raise ValueError("need at least two cameras")
        self.observations = observations
        self.depths = np.asarray(depths, dtype=float)
        if self.depths.shape != (P,) or (self.depths <= 0).any():
            raise ValueError("depths must be positive, one per point")
        self.n_cameras = C
        self.n_points = P
        self.n_residuals = C * P
        self.param_dim = 6 * (C - 1)
        self._points: np.ndarray | None = None

    def retract(self, theta: BundleCameras, delta):
        return theta.plus(delta)

    def prepare(self, theta: BundleCameras) -> None:
        self._points = self.solve_points(theta)

    def solve_points(self, theta: BundleCameras) -> np.ndarray:
        """All P points in closed form from the given cameras, shape (P, 3).

        Vectorized over points: the stacked camera matrix is shared, only
        the right-hand side and the depth scale differ per point.
        """
        C, P = self.n_cameras, self.n_points
        A0 = theta.rotations[:, :2, :].reshape(2 * C, 3)
        G = A0.T @ A0
        if abs(np.linalg.det(G)) < _ABS_SINGULAR:
            raise UnderdeterminedPointError("degenerate camera configuration")
        tvec = theta.translations[:, :2].reshape(2 * C)
        M = self.observations.transpose(0, 2, 1).reshape(2 * C, P)
        # X_j = d_j G^{-1} A0^T m_j - G^{-1} A0^T tvec  (depth factors out)
        Ginv_A0T = np.linalg.solve(G, A0.T)
        X = (Ginv_A0T @ M) * self.depths[None, :] \
            - (Ginv_A0T @ tvec)[:, None]
        return X.T

    def _frozen_points(self):
        if self._points is None:
            raise RuntimeError("prepare() must run before evaluation")
        return self._points

    def eval_blocks(self, indices, theta: BundleCameras):
        pts = self._frozen_points()
        cam = indices // self.n_points
        pnt = indices % self.n_points
        Y = np.einsum("mab,mb->ma", theta.rotations[cam], pts[pnt]) \
            + theta.translations[cam]
        proj = Y[:, :2] / self.depths[pnt, None]
        return proj - self.observations[cam, pnt]

    def eval_blocks_with_jacobian(self, indices, theta: BundleCameras):
        pts = self._frozen_points()
        cam = indices // self.n_points
        pnt = indices % self.n_points
        RX = np.einsum("mab,mb->ma", theta.rotations[cam], pts[pnt])
        Y = RX + theta.translations[cam]
        inv_d = 1.0 / self.depths[pnt]
        r = Y[:, :2] * inv_d[:, None] - self.observations[cam, pnt]
        jac = np.zeros((len(indices), 2, self.param_dim))
        for i in range(1, self.n_cameras):
            sel = cam == i
            if not sel.any():
                continue
            # d(exp(w) R X)/dw at 0 is -hat(R X); rows 1..2, scaled by 1/depth.
            rx = RX[sel]
            scale = inv_d[sel]
            col = 6 * (i - 1)
            jac[sel, 0, col + 1] = rx[:, 2] * scale
            jac[sel, 0, col + 2] = -rx[:, 1] * scale
            jac[sel, 1, col + 0] = -rx[:, 2] * scale
            jac[sel, 1, col + 2] = rx[:, 0] * scale
            jac[sel, 0, col + 3] = scale
            jac[sel, 1, col + 4] = scale
        return r, jac


@dataclass
class BundleInstance:
    """Synthetic weak-perspective scene with ground truth."""

    rotations: np.ndarray
    translations: np.ndarray
    points: np.ndarray
    depths: np.ndarray
    observations: np.ndarray
    noise: float
    seed: int

    @property
    def n_cameras(self) -> int:
        return self.rotations.shape[0]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def model(self) -> WeakPerspectiveModel:
        return WeakPerspectiveModel(self.observations, self.depths)

    def cameras_true(self) -> BundleCameras:
        return BundleCameras(self.rotations.copy(), self.translations.copy())


def generate_bundle_instance(seed: int, n_cameras: int = 3,
                             n_points: int = 100, noise: float = 0.0
                             ) -> BundleInstance:
    """Random scene observed by the weak-perspective model itself.

    Camera 1 is the identity (the gauge); the others get small rotations
    and modest translations.  Per-point depths are the average
    camera-frame depth over all true cameras, then observations come from
    the same projection the model optimizes, so the ground truth has
    exactly zero cost when noise is zero.
    """
    if n_cameras < 2:
        raise ValueError("need at least two cameras")
    rng = np.random.default_rng(seed)
    rotations = np.empty((n_cameras, 3, 3))
    translations = np.empty((n_cameras, 3))
    rotations[0] = np.eye(3)
    translations[0] = 0.0
    for i in range(1, n_cameras):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        rotations[i] = so3_exp(rng.uniform(0.05, 0.2) * axis)
        translations[i] = rng.uniform(-0.8, 0.8, 3)
    points = np.column_stack([rng.uniform(-2.0, 2.0, n_points),
                              rng.uniform(-2.0, 2.0, n_points),
                              rng.uniform(4.0, 8.0, n_points)])
    cam_pts = np.einsum("cab,pb->cpa", rotations, points) \
        + translations[:, None, :]
    depths = cam_pts[:, :, 2].mean(axis=0)
    observations = cam_pts[:, :, :2] / depths[None, :, None]
    if noise > 0.0:
        observations = observations + rng.normal(0.0, noise,
                                                 observations.shape)
    return BundleInstance(rotations, translations, points, depths,
                          observations, noise, seed)


def perturb_bundle_cameras(cameras: BundleCameras, rng: np.random.Generator,
                           rot_scale: float = 0.02,
                           trans_scale: float = 0.05) -> BundleCameras:
    delta = np.concatenate([
        np.concatenate([rot_scale * rng.normal(size=3),
                        trans_scale * rng.normal(size=3)])
        for _ in range(1, cameras.n_cameras)])
    return cameras.plus(delta)
