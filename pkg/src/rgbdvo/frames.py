"""Frame containers shared by the pipeline, providers and synthesizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics


@dataclass
class RgbdFrame:
    """One timestamped intensity image + metric depth map.

    Intensity is single-channel float in [0, 1]; invalid depth is encoded as
    0 (any value <= 0 or non-finite is treated as missing).
    """

    index: int
    timestamp: float
    intensity: np.ndarray  # (H, W) float
    depth: np.ndarray  # (H, W) float, meters
    intrinsics: Intrinsics

    @property
    def shape(self):
        return self.intensity.shape

    def depth_valid_mask(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0)
