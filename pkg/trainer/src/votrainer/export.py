"""Inference-time export of .cmap uncertainty maps.

One map per adjacent frame pair (j, i) = (t-1, t), named j_i.cmap. The
forward pass consumes only the raw intensity/depth pair; no ground truth is
read or required.
"""

from __future__ import annotations

import os

import numpy as np
import torch

from .cmapio import cmap_filename, write_cmap
from .data import SequenceData, load_sequence
from .model import UncertaintyNet


def predict_pair(model: UncertaintyNet, seq: SequenceData, frame_j: int, frame_i: int):
    """(log_photo, log_geo) float32 maps for one pair, gradient-free."""
    as_t = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
    with torch.no_grad():
        log_photo, log_geo = model(
            as_t(seq.intensities[frame_j]),
            as_t(seq.intensities[frame_i]),
            as_t(seq.depths[frame_j]),
            as_t(seq.depths[frame_i]),
        )
    return (
        log_photo[0, 0].numpy().astype(np.float32),
        log_geo[0, 0].numpy().astype(np.float32),
    )


def export_maps(model: UncertaintyNet, data_root: str, out_dir: str) -> list:
    """Writes N-1 .cmap files for an N-frame sequence; returns their paths."""
    seq = load_sequence(data_root)
    os.makedirs(out_dir, exist_ok=True)
    model.eval()
    paths = []
    for t in range(1, len(seq)):
        log_photo, log_geo = predict_pair(model, seq, t - 1, t)
        path = os.path.join(out_dir, cmap_filename(t - 1, t))
        write_cmap(path, log_photo, log_geo)
        paths.append(path)
    return paths
