"""Dataset ingestion and on-disk sequence layout.

Two formats:
  - tum: classic rgb.txt/depth.txt layout with greedy nearest-timestamp
    association (max gap 0.02 s), 16-bit depth PNGs at 5000 units/meter.
  - synth: the generator's manifest, which additionally indexes GT flow
    files, dynamic masks and the GT trajectory.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .consistency import FlowField
from .errors import DatasetError
from .frames import RgbdFrame
from .geometry import Intrinsics, Se3Pose, rgb_to_intensity

DEPTH_SCALE = 5000.0
MAX_ASSOC_GAP = 0.02
FLOW_MAGIC = b"FLOW"

# TUM Freiburg defaults, used when no calibration file is present.
TUM_DEFAULT_INTRINSICS = (525.0, 525.0, 319.5, 239.5)


def write_intensity_png(path: str, intensity: np.ndarray) -> None:
    arr = np.clip(np.round(intensity * 65535.0), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def write_depth_png(path: str, depth: np.ndarray, scale: float = DEPTH_SCALE) -> None:
    arr = np.clip(np.round(depth * scale), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def write_mask_png(path: str, mask: np.ndarray) -> None:
    Image.fromarray((mask.astype(np.uint8)) * 255).save(path)


def read_intensity(path: str) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        return rgb_to_intensity(arr / 255.0)
    if arr.dtype == np.uint8:
        return arr / 255.0
    return arr.astype(np.float64) / 65535.0


def read_depth(path: str, scale: float = DEPTH_SCALE) -> np.ndarray:
    arr = np.asarray(Image.open(path)).astype(np.float64)
    return arr / scale


def read_mask(path: str) -> np.ndarray:
    return np.asarray(Image.open(path)) > 0


def write_flow(path: str, flow: FlowField) -> None:
    """2-plane float32 flow file; invalid pixels stored as NaN."""
    h, w = flow.valid.shape
    planes = flow.flow.copy()
    planes[~flow.valid] = np.nan
    with open(path, "wb") as f:
        f.write(FLOW_MAGIC)
        f.write(struct.pack("<HIIB", 1, w, h, 2))
        f.write(b"\x00" * 5)
        f.write(np.ascontiguousarray(planes[..., 0], dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(planes[..., 1], dtype="<f4").tobytes())


def read_flow(path: str) -> FlowField:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 20 or data[:4] != FLOW_MAGIC:
        raise DatasetError(f"{path}: not a FLOW file")
    _version, w, h, channels = struct.unpack("<HIIB", data[4:15])
    if channels != 2 or len(data) != 20 + 8 * w * h:
        raise DatasetError(f"{path}: corrupt flow file")
    planes = np.frombuffer(data[20:], dtype="<f4").reshape(2, h, w).astype(np.float64)
    flow = np.stack([planes[0], planes[1]], axis=-1)
    valid = np.isfinite(flow).all(axis=-1)
    flow = np.where(valid[..., None], flow, np.nan)
    return FlowField(flow, valid)


@dataclass
class DatasetIndex:
    root: str
    entries: list  # (timestamp, rgb_path, depth_path)
    intrinsics: Intrinsics
    depth_scale: float = DEPTH_SCALE
    mask_paths: list = field(default_factory=list)
    flow_paths: dict = field(default_factory=dict)  # (j, i) -> path
    groundtruth_path: str = ""

    def __len__(self):
        return len(self.entries)

    def load_frame(self, i: int) -> RgbdFrame:
        ts, rgb, depth = self.entries[i]
        return RgbdFrame(
            index=i,
            timestamp=ts,
            intensity=read_intensity(os.path.join(self.root, rgb)),
            depth=read_depth(os.path.join(self.root, depth), self.depth_scale),
            intrinsics=self.intrinsics,
        )

    def load_mask(self, i: int) -> np.ndarray:
        if not self.mask_paths:
            raise DatasetError("dataset has no dynamic masks")
        return read_mask(os.path.join(self.root, self.mask_paths[i]))

    def gt_source(self):
        """GroundTruthSource backed by the on-disk flow files + trajectory."""
        from .evaluation import read_trajectory

        if not self.flow_paths or not self.groundtruth_path:
            return None
        traj = read_trajectory(os.path.join(self.root, self.groundtruth_path))
        return FileGroundTruth(self, {i: p for i, p in enumerate(traj.poses)})


class FileGroundTruth:
    """GT flow/pose access for the oracle provider, reading from disk."""

    def __init__(self, index: DatasetIndex, poses: dict):
        self.index = index
        self.poses = poses
        self._cache = {}

    def flow(self, frame_j: int, frame_i: int) -> FlowField:
        key = (frame_j, frame_i)
        if key not in self._cache:
            if key not in self.index.flow_paths:
                raise KeyError(key)
            # Pairs are visited once each; keep only the latest.
            self._cache = {
                key: read_flow(os.path.join(self.index.root, self.index.flow_paths[key]))
            }
        return self._cache[key]

    def relative_pose(self, frame_j: int, frame_i: int) -> Se3Pose:
        return self.poses[frame_i].inverse().compose(self.poses[frame_j])


def write_sequence(out_dir: str, frames, gt, depth_scale: float = DEPTH_SCALE) -> None:
    """Write a rendered sequence in the dataset layout + synth manifest."""
    for sub in ("rgb", "depth", "masks", "flow"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    k = frames[0].intrinsics
    rgb_lines, depth_lines, manifest = [], [], []
    manifest.append("format synth 1")
    manifest.append(
        f"intrinsics {k.fx!r} {k.fy!r} {k.cx!r} {k.cy!r} {k.width} {k.height}"
    )
    manifest.append(f"depth_scale {depth_scale!r}")
    manifest.append(f"frames {len(frames)}")
    for t, fr in enumerate(frames):
        rgb_rel = f"rgb/{t:06d}.png"
        depth_rel = f"depth/{t:06d}.png"
        mask_rel = f"masks/{t:06d}.png"
        write_intensity_png(os.path.join(out_dir, rgb_rel), fr.intensity)
        write_depth_png(os.path.join(out_dir, depth_rel), fr.depth, depth_scale)
        write_mask_png(os.path.join(out_dir, mask_rel), gt.dynamic_masks[t])
        rgb_lines.append(f"{fr.timestamp:.6f} {rgb_rel}")
        depth_lines.append(f"{fr.timestamp:.6f} {depth_rel}")
        manifest.append(f"frame {t} {fr.timestamp:.6f} {rgb_rel} {depth_rel} {mask_rel}")
    for (j, i), fl in sorted(gt.flows.items()):
        rel = f"flow/{j:06d}_{i:06d}.flow"
        write_flow(os.path.join(out_dir, rel), fl)
        manifest.append(f"flow {j} {i} {rel}")
    manifest.append("groundtruth groundtruth.txt")

    from .evaluation import Trajectory, write_trajectory

    traj = Trajectory([f.timestamp for f in frames], list(gt.poses))
    write_trajectory(os.path.join(out_dir, "groundtruth.txt"), traj)
    with open(os.path.join(out_dir, "rgb.txt"), "w") as f:
        f.write("\n".join(rgb_lines) + "\n")
    with open(os.path.join(out_dir, "depth.txt"), "w") as f:
        f.write("\n".join(depth_lines) + "\n")
    with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
        f.write("\n".join(manifest) + "\n")


def _parse_stamped_list(path: str):
    out = []
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    for ln_no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise DatasetError(f"{path}:{ln_no}: malformed line {line!r}")
        try:
            out.append((float(parts[0]), parts[1]))
        except ValueError as exc:
            raise DatasetError(f"{path}:{ln_no}: bad timestamp {parts[0]!r}") from exc
    return out


def _associate(rgb, depth, max_gap: float = MAX_ASSOC_GAP):
    """Greedy nearest-timestamp association."""
    pairs = []
    used = set()
    d_ts = np.array([t for t, _ in depth])
    for ts, rgb_path in rgb:
        if len(d_ts) == 0:
            break
        k = int(np.argmin(np.abs(d_ts - ts)))
        if abs(d_ts[k] - ts) <= max_gap and k not in used:
            used.add(k)
            pairs.append((ts, rgb_path, depth[k][1]))
    return pairs


def load_dataset(root: str, fmt: str = "auto") -> DatasetIndex:
    if not os.path.isdir(root):
        raise DatasetError(f"dataset directory not found: {root}")
    if fmt == "auto":
        fmt = "synth" if os.path.exists(os.path.join(root, "manifest.txt")) else "tum"
    if fmt == "synth":
        return _load_synth(root)
    if fmt == "tum":
        return _load_tum(root)
    raise DatasetError(f"unknown dataset format {fmt!r}")


def _load_synth(root: str) -> DatasetIndex:
    path = os.path.join(root, "manifest.txt")
    entries, masks, flows = [], [], {}
    intr = None
    depth_scale = DEPTH_SCALE
    gt_path = ""
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    for ln_no, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "intrinsics":
                fx, fy, cx, cy = map(float, parts[1:5])
                w, h = int(parts[5]), int(parts[6])
                intr = Intrinsics(fx, fy, cx, cy, w, h)
            elif tag == "depth_scale":
                depth_scale = float(parts[1])
            elif tag == "frame":
                entries.append((float(parts[2]), parts[3], parts[4]))
                masks.append(parts[5])
            elif tag == "flow":
                flows[(int(parts[1]), int(parts[2]))] = parts[3]
            elif tag == "groundtruth":
                gt_path = parts[1]
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"{path}:{ln_no}: malformed manifest line") from exc
    if intr is None:
        raise DatasetError(f"{path}: missing intrinsics")
    for ts, rgb, depth in entries:
        for rel in (rgb, depth):
            if not os.path.exists(os.path.join(root, rel)):
                raise DatasetError(f"referenced file missing: {rel}")
    return DatasetIndex(
        root=root,
        entries=entries,
        intrinsics=intr,
        depth_scale=depth_scale,
        mask_paths=masks,
        flow_paths=flows,
        groundtruth_path=gt_path,
    )


def _load_tum(root: str) -> DatasetIndex:
    rgb = _parse_stamped_list(os.path.join(root, "rgb.txt"))
    depth = _parse_stamped_list(os.path.join(root, "depth.txt"))
    pairs = _associate(rgb, depth)
    if not pairs:
        raise DatasetError("no associable rgb/depth pairs within the gap bound")
    calib = os.path.join(root, "calibration.txt")
    if os.path.exists(calib):
        fx, fy, cx, cy = map(float, open(calib).read().split()[:4])
    else:
        fx, fy, cx, cy = TUM_DEFAULT_INTRINSICS
    first = Image.open(os.path.join(root, pairs[0][1]))
    w, h = first.size
    for ts, rgb_p, depth_p in pairs:
        for rel in (rgb_p, depth_p):
            if not os.path.exists(os.path.join(root, rel)):
                raise DatasetError(f"referenced file missing: {rel}")
    return DatasetIndex(
        root=root,
        entries=pairs,
        intrinsics=Intrinsics(fx, fy, cx, cy, w, h),
    )
