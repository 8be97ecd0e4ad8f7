"""Dense photometric homography alignment.

Eight parameters theta = (h11, h12, h13, h21, h22, h23, h31, h32) form
the homography with h33 fixed to 1; every pixel x of the source image
contributes one residual

    r(x, theta) = I1(x) - I2(w(x, theta))

with bilinear sampling of I2.  Pixels whose warp leaves the target
domain (or whose projective denominator vanishes) are excluded for that
evaluation: zero residual and Jacobian.

Sampling returns the exact in-cell derivative of the bilinear
interpolant, so analytic Jacobians of the ``forward`` linearization
match central finite differences of the actual residual function.  The
default ``esm`` linearization instead averages the source-image gradient
at x with the target-image gradient at the warped point (the combined
forward/backward compositional form), a deliberate approximation that
is more stable far from the optimum; it shares every term with the
forward mode except the averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..model import ResidualModel

_MIN_DENOM = 1e-12


def homography_matrix(theta: np.ndarray) -> np.ndarray:
    """3x3 matrix for the 8 free parameters, h33 = 1."""
    H = np.append(np.asarray(theta, dtype=float), 1.0).reshape(3, 3)
    if abs(np.linalg.det(H)) <= 1e-12:
        raise ValueError("homography is singular")
    return H


def warp_points(theta: np.ndarray, pts: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray]:
    """Apply the homography to (m, 2) points.

    Returns warped points and a validity mask; points with a
    non-positive projective denominator are flagged invalid (the warp
    would pass through infinity) and their coordinates are zeroed.
    """
    x, y = pts[:, 0], pts[:, 1]
    t = theta
    denom = t[6] * x + t[7] * y + 1.0
    valid = denom > _MIN_DENOM
    safe = np.where(valid, denom, 1.0)
    u = (t[0] * x + t[1] * y + t[2]) / safe
    v = (t[3] * x + t[4] * y + t[5]) / safe
    out = np.column_stack([np.where(valid, u, 0.0), np.where(valid, v, 0.0)])
    return out, valid


def _cell_indices(coord: np.ndarray, size: int):
    i0 = np.clip(np.floor(coord).astype(int), 0, size - 2)
    frac = coord - i0
    return i0, frac


def sample_bilinear(img: np.ndarray, pts: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear values and exact in-cell gradients at (m, 2) points.

    Points must lie inside [0, W-1] x [0, H-1]; the caller masks first.
    Returns (value, d/dx, d/dy).
    """
    h, w = img.shape
    x0, fx = _cell_indices(pts[:, 0], w)
    y0, fy = _cell_indices(pts[:, 1], h)
    i00 = img[y0, x0]
    i10 = img[y0, x0 + 1]
    i01 = img[y0 + 1, x0]
    i11 = img[y0 + 1, x0 + 1]
    val = (1 - fy) * ((1 - fx) * i00 + fx * i10) \
        + fy * ((1 - fx) * i01 + fx * i11)
    gx = (1 - fy) * (i10 - i00) + fy * (i11 - i01)
    gy = (1 - fx) * (i01 - i00) + fx * (i11 - i10)
    return val, gx, gy


class PhotometricModel(ResidualModel):
    """One residual block per source pixel; dense direct alignment."""

    residual_dim = 1

    def __init__(self, image1: np.ndarray, image2: np.ndarray,
                 mode: str = "esm"):
        if image1.ndim != 2 or image2.ndim != 2:
            raise ValueError("images must be 2-d grayscale arrays")
        if min(*image1.shape, *image2.shape) < 16:
            raise ValueError("images must be at least 16 pixels on a side")
        if mode not in ("esm", "forward"):
            raise ValueError(f"unknown linearization mode {mode!r}")
        self.image1 = np.asarray(image1, dtype=float)
        self.image2 = np.asarray(image2, dtype=float)
        self.mode = mode
        h, w = self.image1.shape
        ys, xs = np.mgrid[0:h, 0:w]
        self._pix = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
        self._i1_flat = self.image1.ravel()
        self.n_residuals = h * w
        self.param_dim = 8

    def _warp_valid(self, indices, theta):
        pts = self._pix[indices]
        warped, valid = warp_points(theta, pts)
        h, w = self.image2.shape
        valid &= (warped[:, 0] >= 0.0) & (warped[:, 0] <= w - 1.0) \
            & (warped[:, 1] >= 0.0) & (warped[:, 1] <= h - 1.0)
        return pts, warped, valid

    def eval_blocks(self, indices, theta):
        pts, warped, valid = self._warp_valid(indices, theta)
        r = np.zeros(len(indices))
        if valid.any():
            val, _, _ = sample_bilinear(self.image2, warped[valid])
            r[valid] = self._i1_flat[indices][valid] - val
        return r[:, None]

    def eval_blocks_with_jacobian(self, indices, theta):
        pts, warped, valid = self._warp_valid(indices, theta)
        m = len(indices)
        r = np.zeros(m)
        jac = np.zeros((m, 1, 8))
        if not valid.any():
            return r[:, None], jac
        pv = pts[valid]
        wv = warped[valid]
        val, gx, gy = sample_bilinear(self.image2, wv)
        r[valid] = self._i1_flat[indices][valid] - val
        if self.mode == "esm":
            sgx, sgy = sample_bilinear(self.image1, pv)[1:]
            gx = 0.5 * (gx + sgx)
            gy = 0.5 * (gy + sgy)
        x, y = pv[:, 0], pv[:, 1]
        denom = theta[6] * x + theta[7] * y + 1.0
        u, v = wv[:, 0], wv[:, 1]
        # d warp / d theta, chained with the (negated) image gradient.
        inv = 1.0 / denom
        jv = np.empty((valid.sum(), 8))
        jv[:, 0] = -gx * x * inv
        jv[:, 1] = -gx * y * inv
        jv[:, 2] = -gx * inv
        jv[:, 3] = -gy * x * inv
        jv[:, 4] = -gy * y * inv
        jv[:, 5] = -gy * inv
        jv[:, 6] = (gx * u + gy * v) * x * inv
        jv[:, 7] = (gx * u + gy * v) * y * inv
        jac[valid, 0, :] = jv
        return r[:, None], jac

    def n_active(self, theta) -> int:
        """Pixels inside the target domain at this iterate."""
        _, _, valid = self._warp_valid(np.arange(self.n_residuals), theta)
        return int(valid.sum())


@dataclass
class HomographyInstance:
    """Source/target image pair with the ground-truth warp parameters."""

    image1: np.ndarray
    image2: np.ndarray
    theta_true: np.ndarray
    noise: float
    seed: int

    def model(self, mode: str = "esm") -> PhotometricModel:
        return PhotometricModel(self.image1, self.image2, mode=mode)


def identity_homography() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])


def random_homography_params(rng: np.random.Generator, width: int,
                             height: int, scale: float = 1.0) -> np.ndarray:
    """Modest random warp: a few pixels of translation, slight affine and
    projective terms, scaled so identity initialization converges."""
    theta = identity_homography()
    theta[[0, 1, 3, 4]] += rng.normal(0.0, 0.01 * scale, 4)
    theta[[2, 5]] += rng.normal(0.0, 0.02 * scale * width, 2)
    theta[[6, 7]] += rng.normal(0.0, 0.0002 * scale / max(width, height), 2)
    return theta


def generate_homography_instance(seed: int, width: int = 64, height: int = 64,
                                 theta_true: np.ndarray | None = None,
                                 noise: float = 0.0) -> HomographyInstance:
    """Smoothed random texture warped by the inverse ground-truth homography.

    I2 is I1 resampled through the inverse warp (coordinates clamped at
    the border, extending the texture smoothly), so I2(w(x, theta_true))
    reproduces I1(x) up to resampling blur; with the identity warp and no
    noise the two images are bitwise equal.
    """
    if width < 16 or height < 16:
        raise ValueError("images must be at least 16 pixels on a side")
    rng = np.random.default_rng(seed)
    image1 = gaussian_filter(rng.random((height, width)), sigma=2.0)
    if theta_true is None:
        theta_true = random_homography_params(rng, width, height)
    H = homography_matrix(theta_true)
    Hinv = np.linalg.inv(H)
    Hinv /= Hinv[2, 2]
    theta_inv = Hinv.ravel()[:8]
    ys, xs = np.mgrid[0:height, 0:width]
    grid = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    back, valid = warp_points(theta_inv, grid)
    # Clamp out-of-domain lookups to the border instead of invalidating
    # them: the texture extends continuously and I2 has no hard edges.
    back[:, 0] = np.clip(back[:, 0], 0.0, width - 1.0)
    back[:, 1] = np.clip(back[:, 1], 0.0, height - 1.0)
    vals, _, _ = sample_bilinear(image1, back)
    image2 = vals.reshape(height, width)
    if noise > 0.0:
        image2 = image2 + rng.normal(0.0, noise, image2.shape)
    return HomographyInstance(image1, image2, np.asarray(theta_true, float),
                              noise, seed)
