"""Trajectory serialization (TUM text format) and ATE/RPE RMSE metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetError, InsufficientOverlapError, InvalidArgumentError
from .geometry import Se3Pose

MATCH_MAX_GAP = 0.02


def rotation_to_quat(rot: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (x, y, z, w), w >= 0."""
    t = np.trace(rot)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (rot[2, 1] - rot[1, 2]) / s
        y = (rot[0, 2] - rot[2, 0]) / s
        z = (rot[1, 0] - rot[0, 1]) / s
    else:
        i = int(np.argmax(np.diag(rot)))
        if i == 0:
            s = np.sqrt(1.0 + rot[0, 0] - rot[1, 1] - rot[2, 2]) * 2.0
            x = 0.25 * s
            y = (rot[0, 1] + rot[1, 0]) / s
            z = (rot[0, 2] + rot[2, 0]) / s
            w = (rot[2, 1] - rot[1, 2]) / s
        elif i == 1:
            s = np.sqrt(1.0 - rot[0, 0] + rot[1, 1] - rot[2, 2]) * 2.0
            x = (rot[0, 1] + rot[1, 0]) / s
            y = 0.25 * s
            z = (rot[1, 2] + rot[2, 1]) / s
            w = (rot[0, 2] - rot[2, 0]) / s
        else:
            s = np.sqrt(1.0 - rot[0, 0] - rot[1, 1] + rot[2, 2]) * 2.0
            x = (rot[0, 2] + rot[2, 0]) / s
            y = (rot[1, 2] + rot[2, 1]) / s
            z = 0.25 * s
            w = (rot[1, 0] - rot[0, 1]) / s
    q = np.array([x, y, z, w])
    q /= np.linalg.norm(q)
    if q[3] < 0:
        q = -q
    return q


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass
class Trajectory:
    timestamps: list
    poses: list  # Se3Pose, camera-to-world

    def __post_init__(self):
        if len(self.timestamps) != len(self.poses):
            raise InvalidArgumentError("timestamp/pose count mismatch")
        ts = np.asarray(self.timestamps)
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise InvalidArgumentError("timestamps must be strictly increasing")
        for p in self.poses:
            if not p.is_finite():
                raise InvalidArgumentError("non-finite pose in trajectory")

    def __len__(self):
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])


def write_trajectory(path: str, traj: Trajectory) -> None:
    lines = []
    for ts, pose in zip(traj.timestamps, traj.poses):
        q = rotation_to_quat(pose.rotation)
        t = pose.translation
        fields = [ts, t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
        lines.append(" ".join(f"{v:.9g}" for v in fields))
    with open(path, "w") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def read_trajectory(path: str) -> Trajectory:
    stamps, poses = [], []
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    for ln_no, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise DatasetError(f"{path}:{ln_no}: expected 8 fields, got {len(parts)}")
        try:
            vals = [float(v) for v in parts]
        except ValueError as exc:
            raise DatasetError(f"{path}:{ln_no}: non-numeric field") from exc
        stamps.append(vals[0])
        poses.append(Se3Pose(quat_to_rotation(np.array(vals[4:8])), np.array(vals[1:4])))
    return Trajectory(stamps, poses)


def _match(est: Trajectory, ref: Trajectory, max_gap: float = MATCH_MAX_GAP):
    """Nearest-neighbor timestamp matching; returns index pairs."""
    ref_ts = np.asarray(ref.timestamps)
    pairs = []
    used = set()
    for i, ts in enumerate(est.timestamps):
        k = int(np.argmin(np.abs(ref_ts - ts)))
        if abs(ref_ts[k] - ts) <= max_gap and k not in used:
            used.add(k)
            pairs.append((i, k))
    return pairs


def align_rigid(a: np.ndarray, b: np.ndarray) -> Se3Pose:
    """Closed-form SE(3) (no scale) minimizing sum ||R a + t - b||^2."""
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    m = (a - ca).T @ (b - cb)
    u, _s, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Se3Pose(rot, cb - rot @ ca)


def ate_rmse(est: Trajectory, ref: Trajectory) -> float:
    """RMSE of translational residuals after closed-form rigid alignment."""
    pairs = _match(est, ref)
    if len(pairs) < 2:
        raise InsufficientOverlapError("fewer than 2 matched timestamp pairs")
    a = np.array([est.poses[i].translation for i, _ in pairs])
    b = np.array([ref.poses[k].translation for _, k in pairs])
    t = align_rigid(a, b)
    resid = a @ t.rotation.T + t.translation - b
    return float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))


def rpe_trans_rmse(est: Trajectory, ref: Trajectory, delta: int = 1) -> float:
    """RMSE of the translational part of relative-pose errors over a fixed
    frame delta."""
    if delta < 1:
        raise InvalidArgumentError("delta must be >= 1")
    pairs = _match(est, ref)
    if len(pairs) < delta + 1:
        raise InsufficientOverlapError("not enough matched pairs for the delta")
    errs = []
    for n in range(len(pairs) - delta):
        i0, k0 = pairs[n]
        i1, k1 = pairs[n + delta]
        rel_est = est.poses[i0].inverse().compose(est.poses[i1])
        rel_ref = ref.poses[k0].inverse().compose(ref.poses[k1])
        err = rel_ref.inverse().compose(rel_est)
        errs.append(np.linalg.norm(err.translation))
    return float(np.sqrt(np.mean(np.square(errs))))
