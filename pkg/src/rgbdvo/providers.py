"""Pluggable sources of per-pair uncertainty maps, plus the .cmap binary
format they are exchanged in.

Three implementations:
  - ConstantProvider: log-covariance identically 0, so every quality map is
    exactly 1 (the unweighted baseline).
  - OracleProvider: pseudo-log-covariances ln(e + eps_floor) built from the
    ground-truth consistency errors; a stand-in for the trained network.
  - FileProvider: reads maps exported by an external predictor from disk.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .consistency import FlowField, geometric_error_map, photometric_error_map
from .errors import MissingGroundTruthError, ProviderIoError
from .frames import RgbdFrame
from .quality import UncertaintyPair

CMAP_MAGIC = b"CMAP"
CMAP_VERSION = 1

# Floor added to GT errors before the log, so zero error stays finite.
ORACLE_LOG_FLOOR = 1e-3
# Error assigned to pixels the oracle cannot evaluate (out-of-bounds warps,
# invalid depth): treated as maximally inconsistent.
ORACLE_INVALID_ERROR = 1.0


def write_cmap(path: str, log_photo: np.ndarray, log_geo: np.ndarray) -> None:
    """Write a 2-plane float32 uncertainty map file (bit-exact layout)."""
    h, w = log_photo.shape
    if log_geo.shape != (h, w):
        raise ProviderIoError("plane shapes differ")
    with open(path, "wb") as f:
        f.write(CMAP_MAGIC)
        f.write(struct.pack("<HIIB", CMAP_VERSION, w, h, 2))
        f.write(b"\x00" * 5)
        f.write(np.ascontiguousarray(log_photo, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(log_geo, dtype="<f4").tobytes())


def read_cmap(path: str):
    """Read a .cmap file; returns (log_photo, log_geo) float32 arrays."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise ProviderIoError(f"cannot read {path}: {exc}") from exc
    if len(data) < 20 or data[:4] != CMAP_MAGIC:
        raise ProviderIoError(f"{path}: not a CMAP file")
    version, w, h, channels = struct.unpack("<HIIB", data[4:15])
    if version != CMAP_VERSION or channels != 2:
        raise ProviderIoError(f"{path}: unsupported version/channels")
    expected = 20 + 2 * 4 * w * h
    if len(data) != expected:
        raise ProviderIoError(f"{path}: truncated ({len(data)} vs {expected} bytes)")
    planes = np.frombuffer(data[20:], dtype="<f4").reshape(2, h, w)
    return planes[0].copy(), planes[1].copy()


def cmap_filename(frame_j: int, frame_i: int) -> str:
    return f"{frame_j}_{frame_i}.cmap"


class ConsistencyProvider:
    """Interface: per-adjacent-pair uncertainty maps."""

    def get_uncertainty(self, frame_j: RgbdFrame, frame_i: RgbdFrame) -> UncertaintyPair:
        raise NotImplementedError


class ConstantProvider(ConsistencyProvider):
    """log-covariance identically zero; quality maps come out exactly 1."""

    def get_uncertainty(self, frame_j: RgbdFrame, frame_i: RgbdFrame) -> UncertaintyPair:
        h, w = frame_i.shape
        zeros = np.zeros((h, w))
        return UncertaintyPair(zeros, zeros.copy(), frame_j.index, frame_i.index)


class GroundTruthSource:
    """GT access the oracle provider needs, keyed by frame index."""

    def flow(self, frame_j: int, frame_i: int) -> FlowField:
        raise NotImplementedError

    def relative_pose(self, frame_j: int, frame_i: int):
        """Pose mapping frame-j camera coordinates to frame-i coordinates."""
        raise NotImplementedError


class OracleProvider(ConsistencyProvider):
    """Pseudo-uncertainty from GT consistency errors: l = ln(e + floor),
    optionally perturbed by seeded Gaussian log-noise."""

    def __init__(self, gt: GroundTruthSource, sigma_noise: float = 0.0, seed: int = 0):
        if gt is None:
            raise MissingGroundTruthError("oracle provider needs ground truth")
        self.gt = gt
        self.sigma_noise = sigma_noise
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def get_uncertainty(self, frame_j: RgbdFrame, frame_i: RgbdFrame) -> UncertaintyPair:
        try:
            flow = self.gt.flow(frame_j.index, frame_i.index)
            t_rel = self.gt.relative_pose(frame_j.index, frame_i.index)
        except KeyError as exc:
            raise MissingGroundTruthError(
                f"no ground truth for pair ({frame_j.index}, {frame_i.index})"
            ) from exc
        e_photo = photometric_error_map(frame_j.intensity, frame_i.intensity, flow)
        e_geo = geometric_error_map(frame_j.depth, frame_i.depth, t_rel, frame_i.intrinsics)
        lp = self._to_log(e_photo.values, e_photo.valid)
        lg = self._to_log(e_geo.values, e_geo.valid)
        if self.sigma_noise > 0:
            lp = lp + self._rng.normal(0.0, self.sigma_noise, lp.shape)
            lg = lg + self._rng.normal(0.0, self.sigma_noise, lg.shape)
        return UncertaintyPair(lp, lg, frame_j.index, frame_i.index)

    @staticmethod
    def _to_log(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
        e = np.where(valid, values, ORACLE_INVALID_ERROR)
        return np.log(e + ORACLE_LOG_FLOOR)


class FileProvider(ConsistencyProvider):
    """Reads <dir>/<j>_<i>.cmap files produced by an external predictor."""

    def __init__(self, directory: str):
        self.directory = directory

    def get_uncertainty(self, frame_j: RgbdFrame, frame_i: RgbdFrame) -> UncertaintyPair:
        path = os.path.join(self.directory, cmap_filename(frame_j.index, frame_i.index))
        if not os.path.exists(path):
            raise ProviderIoError(
                f"missing uncertainty map for pair ({frame_j.index}, {frame_i.index}): {path}"
            )
        lp, lg = read_cmap(path)
        if lp.shape != frame_i.shape:
            raise ProviderIoError(
                f"{path}: map shape {lp.shape} does not match frames {frame_i.shape}"
            )
        return UncertaintyPair(
            lp.astype(np.float64), lg.astype(np.float64), frame_j.index, frame_i.index
        )
