"""SE(3) Lie-group operations, pinhole camera model, bilinear sampling and
image pyramids shared by the rest of the package.

All images are single-channel float arrays with values in [0, 1]; color
inputs are converted with fixed luma weights (0.299, 0.587, 0.114).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    InvalidArgumentError,
    InvalidDepthError,
    NearSingularError,
    SampleOutOfBoundsError,
)

# Series switch for exp/log near zero rotation.
SMALL_ANGLE = 1e-8

# Minimum z for a projection to count as in front of the camera.
Z_MIN = 1e-4

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def rgb_to_intensity(rgb: np.ndarray) -> np.ndarray:
    """Collapse an HxWx3 array to single-channel intensity via luma weights."""
    if rgb.ndim == 2:
        return np.asarray(rgb, dtype=np.float64)
    return np.asarray(rgb, dtype=np.float64) @ LUMA_WEIGHTS


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class Se3Pose:
    """Rigid transform: x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "Se3Pose":
        return Se3Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Se3Pose") -> "Se3Pose":
        """Returns self * other (apply `other` first)."""
        return Se3Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Se3Pose":
        rt = self.rotation.T
        return Se3Pose(rt, -rt @ self.translation)

    def orthonormalized(self) -> "Se3Pose":
        """Project the rotation back onto SO(3) (nearest by Frobenius norm).

        Chained compose/inverse calls accumulate orthonormality error, and
        inverse-by-transpose amplifies it, so long pose chains must be
        re-projected periodically.
        """
        u, _, vt = np.linalg.svd(self.rotation)
        r = u @ vt
        if np.linalg.det(r) < 0:
            r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        return Se3Pose(r, self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (N, 3)."""
        return points @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation)))


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics; distortion-free, rectified input assumed."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgumentError("principal point outside image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def at_level(self, level: int) -> "Intrinsics":
        """Intrinsics for pyramid level `level` under 2x2 mean pooling."""
        s = 2.0 ** (-level)
        return Intrinsics(
            fx=self.fx * s,
            fy=self.fy * s,
            cx=(self.cx + 0.5) * s - 0.5,
            cy=(self.cy + 0.5) * s - 0.5,
            width=int(np.ceil(self.width / 2**level)),
            height=int(np.ceil(self.height / 2**level)),
        )


def se3_exp(xi: np.ndarray) -> Se3Pose:
    """Exponential map from a twist [t, omega] to SE(3), Rodrigues closed form."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (6,) or not np.all(np.isfinite(xi)):
        raise InvalidArgumentError(f"twist must be a finite 6-vector, got {xi!r}")
    t, omega = xi[:3], xi[3:]
    theta = np.linalg.norm(omega)
    w_hat = skew(omega)
    w_hat2 = w_hat @ w_hat
    if theta < SMALL_ANGLE:
        # Second-order series for R and V.
        rot = np.eye(3) + w_hat + 0.5 * w_hat2
        v = np.eye(3) + 0.5 * w_hat + w_hat2 / 6.0
    else:
        s, c = np.sin(theta), np.cos(theta)
        rot = np.eye(3) + (s / theta) * w_hat + ((1.0 - c) / theta**2) * w_hat2
        v = (
            np.eye(3)
            + ((1.0 - c) / theta**2) * w_hat
            + ((theta - s) / theta**3) * w_hat2
        )
    return Se3Pose(rot, v @ t)


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, angle in [0, pi)."""
    cos_theta = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta > np.pi - 1e-6:
        raise NearSingularError("rotation angle too close to pi for stable log")
    if theta < SMALL_ANGLE:
        # First-order: R ~ I + [w]x.
        return np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]) / 2.0
    axis_unscaled = np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    return (theta / (2.0 * np.sin(theta))) * axis_unscaled


def se3_log(pose: Se3Pose) -> np.ndarray:
    """Logarithm map; inverse of se3_exp for rotation angle < pi."""
    omega = so3_log(pose.rotation)
    theta = np.linalg.norm(omega)
    w_hat = skew(omega)
    w_hat2 = w_hat @ w_hat
    # The closed form divides by 1 - cos(theta), which underflows to zero in
    # double precision for theta below ~1e-8; the quadratic series is exact
    # to ~1e-16 up to theta = 1e-4, so switch well before that point.
    if theta < 1e-4:
        v_inv = np.eye(3) - 0.5 * w_hat + w_hat2 / 12.0
    else:
        s, c = np.sin(theta), np.cos(theta)
        v_inv = (
            np.eye(3)
            - 0.5 * w_hat
            + ((1.0 - (theta * s) / (2.0 * (1.0 - c))) / theta**2) * w_hat2
        )
    t = v_inv @ pose.translation
    return np.concatenate([t, omega])


def pose_distance(a: Se3Pose, b: Se3Pose) -> float:
    """Norm of the log of a relative pose; 0 iff a == b."""
    return float(np.linalg.norm(se3_log(a.compose(b.inverse()))))


def backproject(k: Intrinsics, p: np.ndarray, depth) -> np.ndarray:
    """Lift pixel coordinates to a 3D point using metric depth.

    `p` is (2,) or (N, 2) pixel coordinates, `depth` a scalar or (N,) array.
    """
    p = np.asarray(p, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise InvalidDepthError("depth must be finite and > 0")
    x = (p[..., 0] - k.cx) / k.fx * depth
    y = (p[..., 1] - k.cy) / k.fy * depth
    return np.stack([x, y, depth * np.ones_like(x)], axis=-1)


def project(k: Intrinsics, points: np.ndarray, z_min: float = Z_MIN):
    """Perspective projection; returns (pixels, depth).

    Raises BehindCameraError if any z <= z_min. Out-of-bounds results are the
    caller's concern.
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    if np.any(z <= z_min):
        raise BehindCameraError("point at or behind the z_min plane")
    u = k.fx * points[..., 0] / z + k.cx
    v = k.fy * points[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1), z


def warp_point(t_rel: Se3Pose, k: Intrinsics, p: np.ndarray, depth):
    """Warp pixel(s) through backproject -> t_rel -> project.

    Returns (warped pixels, projected depth).
    """
    pts = backproject(k, p, depth)
    return project(k, t_rel.apply(pts))


def bilinear_sample(image: np.ndarray, p: np.ndarray):
    """Bilinearly sample `image` at subpixel coordinates.

    `p` is (2,) or (N, 2) in (x, y) order. Returns (values, d_x, d_y) where
    the gradients are the exact derivatives of the interpolated surface
    within each cell.
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    h, w = image.shape
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x < 0) or np.any(x > w - 1) or np.any(y < 0) or np.any(y > h - 1):
        raise SampleOutOfBoundsError("sample coordinates outside image")
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2) if w > 1 else np.zeros_like(x, dtype=np.intp)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2) if h > 1 else np.zeros_like(y, dtype=np.intp)
    fx = x - x0
    fy = y - y0
    i00 = image[y0, x0]
    i01 = image[y0, x0 + 1]
    i10 = image[y0 + 1, x0]
    i11 = image[y0 + 1, x0 + 1]
    top = i00 * (1 - fx) + i01 * fx
    bot = i10 * (1 - fx) + i11 * fx
    val = top * (1 - fy) + bot * fy
    d_x = (i01 - i00) * (1 - fy) + (i11 - i10) * fy
    d_y = bot - top
    if single:
        return float(val[0]), float(d_x[0]), float(d_y[0])
    return val, d_x, d_y


def pool2x2(image: np.ndarray) -> np.ndarray:
    """2x2 mean pooling with ceil-sized output; partial border blocks average
    the parents that exist."""
    h, w = image.shape
    hh, ww = (h + 1) // 2, (w + 1) // 2
    out = np.zeros((hh, ww), dtype=image.dtype)
    cnt = np.zeros((hh, ww), dtype=np.float64)
    acc = np.zeros((hh, ww), dtype=np.float64)
    for dy in range(2):
        for dx in range(2):
            sub = image[dy::2, dx::2]
            acc[: sub.shape[0], : sub.shape[1]] += sub
            cnt[: sub.shape[0], : sub.shape[1]] += 1.0
    out = acc / cnt
    return out.astype(image.dtype, copy=False)


def build_pyramid(image: np.ndarray, levels: int) -> list:
    """Image pyramid; level 0 is the input, each level 2x2-mean-pooled."""
    if levels < 1:
        raise InvalidArgumentError("pyramid needs at least one level")
    pyr = [np.asarray(image, dtype=np.float64)]
    for _ in range(levels - 1):
        pyr.append(pool2x2(pyr[-1]))
    return pyr
