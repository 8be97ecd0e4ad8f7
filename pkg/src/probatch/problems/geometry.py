"""Small SO(3) and sphere utilities used by the geometric problems."""

from __future__ import annotations

import numpy as np


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix: hat(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix for a rotation vector, by Rodrigues' formula."""
    angle = np.linalg.norm(omega)
    K = hat(omega)
    if angle < 1e-12:
        # Second-order series keeps the result orthonormal to machine
        # precision for tiny angles.
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (np.sin(angle) / angle) * K \
        + ((1.0 - np.cos(angle)) / angle ** 2) * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix (angle < pi assumed)."""
    cos_angle = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    if angle < 1e-8:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0],
                         R[1, 0] - R[0, 1]]) / 2.0
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0],
                     R[1, 0] - R[0, 1]]) / (2.0 * np.sin(angle))
    return angle * axis


def project_so3(M: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense, via SVD."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation from a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def sphere_basis(t: np.ndarray) -> np.ndarray:
    """Orthonormal basis (3, 2) of the tangent plane of the unit sphere at t.

    The seed axis is picked deterministically from the smallest component
    of t so the basis is a stable function of t.
    """
    e = np.zeros(3)
    e[int(np.argmin(np.abs(t)))] = 1.0
    b1 = np.cross(t, e)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(t, b1)
    return np.column_stack([b1, b2])
