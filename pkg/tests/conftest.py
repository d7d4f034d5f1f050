"""Shared fixtures: small rendered scenes and keyframe/frame pairs."""

import numpy as np
import pytest

from rgbdvo import synth
from rgbdvo.quality import QualityPrior
from rgbdvo.selector import select_support
from rgbdvo.tracker import Keyframe


@pytest.fixture(scope="session")
def small_scene():
    """12-frame noiseless sequence at reduced resolution."""
    spec = synth.default_scene(frames=12, seed=3, width=96, height=72)
    frames, gt = synth.render_sequence(spec)
    return frames, gt


@pytest.fixture(scope="session")
def tracking_pair(small_scene):
    """Keyframe on frame 0 with unit prior, plus frame 1 and the GT relative
    pose mapping keyframe coordinates into frame-1 coordinates."""
    frames, gt = small_scene
    kf_frame = frames[0]
    h, w = kf_frame.shape
    support = select_support(
        kf_frame.intensity, kf_frame.depth, np.ones((h, w)), budget=400, seed=0
    )
    kf = Keyframe(
        frame=kf_frame,
        world_pose=gt.poses[0],
        prior=QualityPrior.unit(h, w, 0),
        support=support,
        index=0,
    )
    rel = gt.relative_pose(0, 1)
    return kf, frames[1], rel
