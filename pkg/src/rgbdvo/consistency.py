"""Ground-truth consistency error maps and the heteroscedastic NLL score.

These are verification/training oracles: they consume GT flow, pose and
depth, never estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .geometry import Intrinsics, Se3Pose, bilinear_sample

# Stabilizer in the relative depth-inconsistency denominator (meters).
GEO_EPS = 1e-6


@dataclass
class FlowField:
    """Per-pixel displacement from frame j to frame i, stored on frame i's
    grid: flow[p] = p - p_j, so warping samples I_j at p - flow[p]."""

    flow: np.ndarray  # (H, W, 2), (dx, dy)
    valid: np.ndarray  # (H, W) bool

    @staticmethod
    def zero(height: int, width: int) -> "FlowField":
        return FlowField(
            np.zeros((height, width, 2)), np.ones((height, width), dtype=bool)
        )


@dataclass
class ErrorMap:
    values: np.ndarray  # (H, W), >= 0 where valid
    valid: np.ndarray  # (H, W) bool
    kind: str = "photo"  # "photo" or "geo"

    def masked_sum(self) -> float:
        return float(self.values[self.valid].sum())


def photometric_error_map(img_j: np.ndarray, img_i: np.ndarray, flow: FlowField) -> ErrorMap:
    """L1 difference between the flow-warped reference image and the current
    image; mask false where the warp source leaves bounds."""
    if img_j.shape != img_i.shape or img_j.shape != flow.flow.shape[:2]:
        raise ShapeError("images and flow must share dimensions")
    h, w = img_i.shape
    ys, xs = np.mgrid[0:h, 0:w]
    src_x = xs - flow.flow[..., 0]
    src_y = ys - flow.flow[..., 1]
    in_bounds = (src_x >= 0) & (src_x <= w - 1) & (src_y >= 0) & (src_y <= h - 1)
    valid = flow.valid & in_bounds & np.isfinite(src_x) & np.isfinite(src_y)
    values = np.zeros((h, w))
    if np.any(valid):
        coords = np.stack([src_x[valid], src_y[valid]], axis=-1)
        warped, _, _ = bilinear_sample(img_j, coords)
        values[valid] = np.abs(warped - img_i[valid])
    return ErrorMap(values, valid, kind="photo")


def geometric_error_map(
    depth_j: np.ndarray,
    depth_i: np.ndarray,
    t_rel: Se3Pose,
    k: Intrinsics,
    eps: float = GEO_EPS,
) -> ErrorMap:
    """Relative depth inconsistency between the projected reference depth and
    the depth measured at the projected location (nearest-neighbor lookup).

    Invalid depth is anything <= 0 or non-finite.
    """
    if depth_j.shape != depth_i.shape or depth_j.shape != (k.height, k.width):
        raise ShapeError("depth maps must match the intrinsics dimensions")
    h, w = depth_j.shape
    ys, xs = np.mgrid[0:h, 0:w]
    src_valid = np.isfinite(depth_j) & (depth_j > 0)
    values = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    if not np.any(src_valid):
        return ErrorMap(values, valid, kind="geo")
    px = np.stack([xs[src_valid], ys[src_valid]], axis=-1).astype(np.float64)
    pts = np.empty((px.shape[0], 3))
    d = depth_j[src_valid]
    pts[:, 0] = (px[:, 0] - k.cx) / k.fx * d
    pts[:, 1] = (px[:, 1] - k.cy) / k.fy * d
    pts[:, 2] = d
    moved = t_rel.apply(pts)
    z = moved[:, 2]
    front = z > 1e-4
    u = np.where(front, k.fx * moved[:, 0] / np.where(front, z, 1.0) + k.cx, -1.0)
    v = np.where(front, k.fy * moved[:, 1] / np.where(front, z, 1.0) + k.cy, -1.0)
    un = np.round(u).astype(np.intp)
    vn = np.round(v).astype(np.intp)
    in_bounds = front & (un >= 0) & (un < w) & (vn >= 0) & (vn < h)
    un_c = np.clip(un, 0, w - 1)
    vn_c = np.clip(vn, 0, h - 1)
    d_i = depth_i[vn_c, un_c]
    tgt_valid = in_bounds & np.isfinite(d_i) & (d_i > 0)
    err = np.zeros_like(z)
    err[tgt_valid] = np.abs(z[tgt_valid] - d_i[tgt_valid]) / (d_i[tgt_valid] + eps)
    values[src_valid] = err
    ok = np.zeros((h, w), dtype=bool)
    ok[src_valid] = tgt_valid
    return ErrorMap(values, ok, kind="geo")


def nll_score(err: ErrorMap, log_cov: np.ndarray) -> float:
    """Heteroscedastic Laplacian NLL summed over valid pixels:
    sum of e * exp(-l) + l. Lower means better-calibrated uncertainty."""
    if err.values.shape != log_cov.shape:
        raise ShapeError("error map and log-covariance map must match")
    e = err.values[err.valid]
    l = log_cov[err.valid]
    return float(np.sum(e * np.exp(-l) + l))


@dataclass
class MaskedMap:
    values: np.ndarray
    valid: np.ndarray


def multiscale_pool(values: np.ndarray, valid: np.ndarray, n_levels: int) -> list:
    """Multi-scale average pooling of a masked map; masks AND over each 2x2
    block. Level 0 is the input."""
    if n_levels < 1:
        raise ShapeError("need at least one level")
    out = [MaskedMap(np.asarray(values, dtype=np.float64), np.asarray(valid, dtype=bool))]
    for _ in range(n_levels - 1):
        v, m = out[-1].values, out[-1].valid
        h, w = v.shape
        hh, ww = (h + 1) // 2, (w + 1) // 2
        acc = np.zeros((hh, ww))
        cnt = np.zeros((hh, ww))
        mask = np.ones((hh, ww), dtype=bool)
        occupied = np.zeros((hh, ww), dtype=bool)
        for dy in range(2):
            for dx in range(2):
                sub = v[dy::2, dx::2]
                msub = m[dy::2, dx::2]
                acc[: sub.shape[0], : sub.shape[1]] += sub
                cnt[: sub.shape[0], : sub.shape[1]] += 1.0
                mask[: msub.shape[0], : msub.shape[1]] &= msub
                occupied[: msub.shape[0], : msub.shape[1]] = True
        mask &= occupied
        out.append(MaskedMap(acc / cnt, mask))
    return out
