"""Loading of synthetic RGB-D training sequences.

Consumes the on-disk sequence layout: manifest.txt with intrinsics and
per-frame rgb/depth/mask paths, FLOW files for GT flow between adjacent
frames, and a TUM-format groundtruth.txt trajectory (tx ty tz qx qy qz qw,
camera-to-world).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DataError

DEPTH_SCALE = 5000.0
FLOW_MAGIC = b"FLOW"


def _read_intensity(path: str) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.ndim == 3:
        weights = np.array([0.299, 0.587, 0.114])
        return (arr / 255.0) @ weights
    if arr.dtype == np.uint8:
        return arr / 255.0
    return arr.astype(np.float64) / 65535.0


def _read_depth(path: str, scale: float) -> np.ndarray:
    return np.asarray(Image.open(path)).astype(np.float64) / scale


def _read_mask(path: str) -> np.ndarray:
    return np.asarray(Image.open(path)) > 0


def read_flow(path: str):
    """Returns (flow (H, W, 2), valid (H, W)). Invalid pixels are NaN on disk."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(data) < 20 or data[:4] != FLOW_MAGIC:
        raise DataError(f"{path}: not a FLOW file")
    _version, w, h, channels = struct.unpack("<HIIB", data[4:15])
    if channels != 2 or len(data) != 20 + 8 * w * h:
        raise DataError(f"{path}: corrupt flow file")
    planes = np.frombuffer(data[20:], dtype="<f4").reshape(2, h, w).astype(np.float64)
    flow = np.stack([planes[0], planes[1]], axis=-1)
    valid = np.isfinite(flow).all(axis=-1)
    return np.where(valid[..., None], flow, np.nan), valid


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (x, y, z, w) -> rotation matrix."""
    x, y, z, w = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _read_trajectory(path: str):
    """TUM trajectory file -> list of 4x4 camera-to-world matrices."""
    poses = []
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for ln_no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise DataError(f"{path}:{ln_no}: expected 8 fields")
        vals = [float(v) for v in parts]
        mat = np.eye(4)
        mat[:3, :3] = quat_to_rotation(np.array(vals[4:8]))
        mat[:3, 3] = vals[1:4]
        poses.append(mat)
    return poses


@dataclass
class SequenceData:
    root: str
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    timestamps: list
    intensities: list  # (H, W) float64 each
    depths: list  # (H, W) float64 each
    masks: list  # (H, W) bool dynamic-object masks, may be empty
    poses: list  # 4x4 camera-to-world, may be empty when GT absent
    flow_paths: dict = field(default_factory=dict)  # (j, i) -> abs path

    def __len__(self):
        return len(self.intensities)

    def has_gt(self) -> bool:
        return bool(self.poses) and bool(self.flow_paths)

    def flow(self, frame_j: int, frame_i: int):
        key = (frame_j, frame_i)
        if key not in self.flow_paths:
            raise DataError(f"no GT flow for pair {key}")
        return read_flow(self.flow_paths[key])

    def relative_transform(self, frame_j: int, frame_i: int) -> np.ndarray:
        """4x4 transform taking frame-j camera coordinates into frame i."""
        if not self.poses:
            raise DataError("sequence has no GT trajectory")
        t_i, t_j = self.poses[frame_i], self.poses[frame_j]
        rot_i = t_i[:3, :3]
        out = np.eye(4)
        out[:3, :3] = rot_i.T @ t_j[:3, :3]
        out[:3, 3] = rot_i.T @ (t_j[:3, 3] - t_i[:3, 3])
        return out


def load_sequence(root: str) -> SequenceData:
    manifest = os.path.join(root, "manifest.txt")
    if not os.path.isfile(manifest):
        raise DataError(f"no manifest.txt under {root}")
    intr = None
    depth_scale = DEPTH_SCALE
    frames, mask_rels, flow_rels = [], [], {}
    gt_rel = ""
    for ln_no, line in enumerate(open(manifest).read().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "intrinsics":
                intr = tuple(map(float, parts[1:5])) + (int(parts[5]), int(parts[6]))
            elif tag == "depth_scale":
                depth_scale = float(parts[1])
            elif tag == "frame":
                frames.append((float(parts[2]), parts[3], parts[4]))
                mask_rels.append(parts[5] if len(parts) > 5 else "")
            elif tag == "flow":
                flow_rels[(int(parts[1]), int(parts[2]))] = parts[3]
            elif tag == "groundtruth":
                gt_rel = parts[1]
        except (ValueError, IndexError) as exc:
            raise DataError(f"{manifest}:{ln_no}: malformed line") from exc
    if intr is None:
        raise DataError(f"{manifest}: missing intrinsics")
    if not frames:
        raise DataError(f"{manifest}: no frames")
    intensities, depths, masks, stamps = [], [], [], []
    for ts, rgb_rel, depth_rel in frames:
        stamps.append(ts)
        intensities.append(_read_intensity(os.path.join(root, rgb_rel)))
        depths.append(_read_depth(os.path.join(root, depth_rel), depth_scale))
    for rel in mask_rels:
        if rel and os.path.exists(os.path.join(root, rel)):
            masks.append(_read_mask(os.path.join(root, rel)))
    if len(masks) != len(frames):
        masks = []
    poses = []
    if gt_rel and os.path.exists(os.path.join(root, gt_rel)):
        poses = _read_trajectory(os.path.join(root, gt_rel))
    flow_paths = {}
    for key, rel in flow_rels.items():
        path = os.path.join(root, rel)
        if os.path.exists(path):
            flow_paths[key] = path
    return SequenceData(
        root=root,
        fx=intr[0],
        fy=intr[1],
        cx=intr[2],
        cy=intr[3],
        width=intr[4],
        height=intr[5],
        timestamps=stamps,
        intensities=intensities,
        depths=depths,
        masks=masks,
        poses=poses,
        flow_paths=flow_paths,
    )
