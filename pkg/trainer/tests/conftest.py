import numpy as np
import pytest

from rgbdvo.datasets import write_sequence
from rgbdvo.synth import Degradation, default_scene, render_sequence


def sprite_scene(seed, frames=10, width=96, height=72):
    """Small moving-sprite scene; the sprite position varies with the seed."""
    rng = np.random.default_rng(seed + 500)
    degradations = [
        Degradation(
            kind="sprite",
            region=(int(rng.integers(10, 50)), int(rng.integers(10, 30)), 30, 22),
            magnitude=1.2,
            motion=(1.5, 0.8),
        )
    ]
    return default_scene(
        frames=frames,
        seed=seed,
        width=width,
        height=height,
        degradations=degradations,
        trans_amp=(0.22, 0.12, 0.15),
        rot_amp=(0.03, 0.04, 0.03),
    )


@pytest.fixture(scope="session")
def plain_seq_dir(tmp_path_factory):
    """6-frame clean sequence written in the on-disk layout."""
    spec = default_scene(frames=6, seed=4, width=96, height=72)
    frames, gt = render_sequence(spec)
    out = str(tmp_path_factory.mktemp("plain_seq"))
    write_sequence(out, frames, gt)
    return out


@pytest.fixture(scope="session")
def sprite_seq_dir(tmp_path_factory):
    """8-frame sequence with one moving sprite."""
    frames, gt = render_sequence(sprite_scene(0, frames=8))
    out = str(tmp_path_factory.mktemp("sprite_seq"))
    write_sequence(out, frames, gt)
    return out
