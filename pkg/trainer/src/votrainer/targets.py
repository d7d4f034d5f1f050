"""Ground-truth consistency targets for a frame pair.

e_photo is the L1 difference between the GT-flow-warped earlier image and
the later image; e_geo is the relative depth inconsistency between the
earlier depth map transformed by the GT relative pose and the depth observed
at the projected pixel. Both are detached supervision signals: nothing here
participates in autograd.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SequenceData
from .errors import DataError

GEO_EPS = 1e-6
LOG_FLOOR = 1e-3
Z_MIN = 1e-4


@dataclass
class TargetMaps:
    e_photo: np.ndarray  # (H, W) float64, >= 0 where valid
    valid_photo: np.ndarray  # (H, W) bool
    e_geo: np.ndarray
    valid_geo: np.ndarray

    def log_photo(self) -> np.ndarray:
        """Log-covariance form, with invalid pixels pinned to ln(1 + floor)."""
        return np.log(np.where(self.valid_photo, self.e_photo, 1.0) + LOG_FLOOR)

    def log_geo(self) -> np.ndarray:
        return np.log(np.where(self.valid_geo, self.e_geo, 1.0) + LOG_FLOOR)


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2)
    ax = xs - x0
    ay = ys - y0
    top = img[y0, x0] * (1 - ax) + img[y0, x0 + 1] * ax
    bot = img[y0 + 1, x0] * (1 - ax) + img[y0 + 1, x0 + 1] * ax
    return top * (1 - ay) + bot * ay


def photometric_targets(img_j, img_i, flow, flow_valid):
    if img_j.shape != img_i.shape or img_j.shape != flow.shape[:2]:
        raise DataError("images and flow must share dimensions")
    h, w = img_i.shape
    ys, xs = np.mgrid[0:h, 0:w]
    src_x = xs - flow[..., 0]
    src_y = ys - flow[..., 1]
    in_bounds = (src_x >= 0) & (src_x <= w - 1) & (src_y >= 0) & (src_y <= h - 1)
    valid = flow_valid & in_bounds & np.isfinite(src_x) & np.isfinite(src_y)
    values = np.zeros((h, w))
    if np.any(valid):
        warped = _bilinear(img_j, src_x[valid], src_y[valid])
        values[valid] = np.abs(warped - img_i[valid])
    return values, valid


def geometric_targets(depth_j, depth_i, t_rel, fx, fy, cx, cy, eps=GEO_EPS):
    if depth_j.shape != depth_i.shape:
        raise DataError("depth maps must share dimensions")
    h, w = depth_j.shape
    ys, xs = np.mgrid[0:h, 0:w]
    src_valid = np.isfinite(depth_j) & (depth_j > 0)
    values = np.zeros((h, w))
    ok = np.zeros((h, w), dtype=bool)
    if not np.any(src_valid):
        return values, ok
    d = depth_j[src_valid]
    pts = np.stack(
        [(xs[src_valid] - cx) / fx * d, (ys[src_valid] - cy) / fy * d, d], axis=-1
    )
    moved = pts @ t_rel[:3, :3].T + t_rel[:3, 3]
    z = moved[:, 2]
    front = z > Z_MIN
    safe_z = np.where(front, z, 1.0)
    un = np.round(np.where(front, fx * moved[:, 0] / safe_z + cx, -1.0)).astype(np.intp)
    vn = np.round(np.where(front, fy * moved[:, 1] / safe_z + cy, -1.0)).astype(np.intp)
    in_bounds = front & (un >= 0) & (un < w) & (vn >= 0) & (vn < h)
    d_i = depth_i[np.clip(vn, 0, h - 1), np.clip(un, 0, w - 1)]
    tgt_valid = in_bounds & np.isfinite(d_i) & (d_i > 0)
    err = np.zeros_like(z)
    err[tgt_valid] = np.abs(z[tgt_valid] - d_i[tgt_valid]) / (d_i[tgt_valid] + eps)
    values[src_valid] = err
    ok[src_valid] = tgt_valid
    return values, ok


def build_targets(seq: SequenceData, frame_j: int, frame_i: int) -> TargetMaps:
    """GT error maps for the ordered pair (j earlier, i later)."""
    if not seq.has_gt():
        raise DataError(f"{seq.root}: sequence lacks GT flow or trajectory")
    flow, flow_valid = seq.flow(frame_j, frame_i)
    e_photo, valid_photo = photometric_targets(
        seq.intensities[frame_j], seq.intensities[frame_i], flow, flow_valid
    )
    e_geo, valid_geo = geometric_targets(
        seq.depths[frame_j],
        seq.depths[frame_i],
        seq.relative_transform(frame_j, frame_i),
        seq.fx,
        seq.fy,
        seq.cx,
        seq.cy,
    )
    return TargetMaps(e_photo, valid_photo, e_geo, valid_geo)
