"""Reader/writer for the shared .cmap uncertainty-map format.

Layout: b"CMAP", then <HIIB (version=1, width, height, channels=2), then
5 zero pad bytes, then two row-major little-endian float32 planes
(log-covariance photo, log-covariance geo).
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError

CMAP_MAGIC = b"CMAP"
CMAP_VERSION = 1
CMAP_CHANNELS = 2
HEADER_SIZE = 20


def cmap_filename(frame_j: int, frame_i: int) -> str:
    return f"{frame_j}_{frame_i}.cmap"


def write_cmap(path: str, log_photo: np.ndarray, log_geo: np.ndarray) -> None:
    if log_photo.shape != log_geo.shape or log_photo.ndim != 2:
        raise DataError("cmap planes must be two equal-shape 2-D arrays")
    h, w = log_photo.shape
    with open(path, "wb") as f:
        f.write(CMAP_MAGIC)
        f.write(struct.pack("<HIIB", CMAP_VERSION, w, h, CMAP_CHANNELS))
        f.write(b"\x00" * 5)
        f.write(np.ascontiguousarray(log_photo, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(log_geo, dtype="<f4").tobytes())


def read_cmap(path: str):
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(data) < HEADER_SIZE or data[:4] != CMAP_MAGIC:
        raise DataError(f"{path}: not a CMAP file")
    version, w, h, channels = struct.unpack("<HIIB", data[4:15])
    if version != CMAP_VERSION or channels != CMAP_CHANNELS:
        raise DataError(f"{path}: unsupported cmap version/channels")
    if len(data) != HEADER_SIZE + 2 * 4 * w * h:
        raise DataError(f"{path}: truncated cmap")
    planes = np.frombuffer(data[HEADER_SIZE:], dtype="<f4").reshape(2, h, w)
    return planes[0].astype(np.float64), planes[1].astype(np.float64)
