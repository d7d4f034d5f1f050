"""Per-pixel quality maps, the bidirectional host-side prior and the
decoupled tracking weights derived from it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

# Lower clip bound of quality maps (also avoids invalid logs in fusion).
EPS_Q = 1e-4
# Stabilizer inside the square root of the weight maps.
EPS_W = 1e-4


@dataclass
class QualityMap:
    values: np.ndarray  # (H, W) in [EPS_Q, 1]
    kind: str  # "photo" or "geo"


@dataclass
class UncertaintyPair:
    """Per-pixel log-covariance maps for one adjacent frame pair (j, i)."""

    log_photo: np.ndarray
    log_geo: np.ndarray
    frame_j: int
    frame_i: int

    def __post_init__(self):
        if self.log_photo.shape != self.log_geo.shape:
            raise InvalidArgumentError("branch maps must share dimensions")
        if not (np.all(np.isfinite(self.log_photo)) and np.all(np.isfinite(self.log_geo))):
            raise InvalidArgumentError("log-covariance maps must be finite")


@dataclass
class QualityPrior:
    """Absolute host-side quality maps attached to a keyframe."""

    q_photo: QualityMap
    q_geo: QualityMap
    host_index: int
    finalized: bool

    @staticmethod
    def unit(height: int, width: int, host_index: int) -> "QualityPrior":
        ones = np.ones((height, width))
        return QualityPrior(
            QualityMap(ones.copy(), "photo"), QualityMap(ones.copy(), "geo"),
            host_index, finalized=False,
        )


@dataclass
class WeightMaps:
    w_photo: np.ndarray
    w_geo: np.ndarray


def pairwise_quality(log_cov: np.ndarray, kind: str) -> QualityMap:
    """Median-normalized, clipped inverse uncertainty for one frame pair:
    clip(median(exp(l)) / exp(l), EPS_Q, 1)."""
    log_cov = np.asarray(log_cov, dtype=np.float64)
    if log_cov.size == 0:
        raise InvalidArgumentError("empty uncertainty map")
    cov = np.exp(log_cov)
    m = np.median(cov)
    return QualityMap(np.clip(m / cov, EPS_Q, 1.0), kind)


def fuse_bidirectional(q_prev: QualityMap, q_next: QualityMap) -> QualityMap:
    """Per-pixel geometric mean of the two pairwise maps flanking a keyframe
    (arithmetic mean in the log domain)."""
    if q_prev.kind != q_next.kind:
        raise InvalidArgumentError("cannot fuse different branches")
    if q_prev.values.shape != q_next.values.shape:
        raise InvalidArgumentError("quality maps must share dimensions")
    return QualityMap(np.sqrt(q_prev.values * q_next.values), q_prev.kind)


def provisional_prior(pair: UncertaintyPair, host_index: int) -> QualityPrior:
    """Prior from a single adjacent pair; finalized once the second pair
    around the host keyframe arrives."""
    return QualityPrior(
        pairwise_quality(pair.log_photo, "photo"),
        pairwise_quality(pair.log_geo, "geo"),
        host_index,
        finalized=False,
    )


def finalize_prior(prior: QualityPrior, pair_next: UncertaintyPair) -> QualityPrior:
    """Fuse the provisional prior with the (T, T+1) pair."""
    return QualityPrior(
        fuse_bidirectional(prior.q_photo, pairwise_quality(pair_next.log_photo, "photo")),
        fuse_bidirectional(prior.q_geo, pairwise_quality(pair_next.log_geo, "geo")),
        prior.host_index,
        finalized=True,
    )


def weights_from_prior(prior: QualityPrior) -> WeightMaps:
    """Decoupled tracking weights w = sqrt(Q + eps)."""
    return WeightMaps(
        np.sqrt(prior.q_photo.values + EPS_W),
        np.sqrt(prior.q_geo.values + EPS_W),
    )
