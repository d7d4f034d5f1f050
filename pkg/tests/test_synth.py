import numpy as np
import pytest

from rgbdvo import synth
from rgbdvo.errors import InvalidArgumentError
from rgbdvo.geometry import Intrinsics, Se3Pose, warp_point


def test_render_is_deterministic():
    spec_a = synth.default_scene(frames=4, seed=9, width=64, height=48)
    spec_b = synth.default_scene(frames=4, seed=9, width=64, height=48)
    fa, ga = synth.render_sequence(spec_a)
    fb, gb = synth.render_sequence(spec_b)
    for a, b in zip(fa, fb):
        np.testing.assert_array_equal(a.intensity, b.intensity)
        np.testing.assert_array_equal(a.depth, b.depth)
    for key in ga.flows:
        np.testing.assert_array_equal(ga.flows[key].flow, gb.flows[key].flow)


def test_different_seed_changes_texture():
    fa, _ = synth.render_sequence(synth.default_scene(frames=1, seed=1, width=64, height=48))
    fb, _ = synth.render_sequence(synth.default_scene(frames=1, seed=2, width=64, height=48))
    assert not np.array_equal(fa[0].intensity, fb[0].intensity)


def test_gt_flow_matches_warp_point_on_static_pixels(small_scene):
    frames, gt = small_scene
    k = gt.intrinsics
    for (j, i) in [(0, 1), (5, 6)]:
        fl = gt.flows[(j, i)]
        t_ij = gt.relative_pose(i, j)  # frame-i coords -> frame-j coords
        h, w = fl.valid.shape
        ys, xs = np.nonzero(fl.valid)
        take = slice(0, len(ys), max(1, len(ys) // 500))
        ys, xs = ys[take], xs[take]
        pix = np.stack([xs, ys], axis=-1).astype(np.float64)
        depth_i = frames[i].depth[ys, xs]
        warped, _ = warp_point(t_ij, k, pix, depth_i)
        expected_flow = pix - warped
        got = fl.flow[ys, xs]
        assert np.max(np.abs(got - expected_flow)) < 1e-6


def test_arc_trajectory_starts_at_identity():
    poses = synth.arc_trajectory(10)
    np.testing.assert_allclose(poses[0].matrix(), np.eye(4), atol=1e-15)
    assert len(poses) == 10


def _flat_spec(**kw):
    k = Intrinsics(fx=60.0, fy=60.0, cx=31.5, cy=23.5, width=64, height=48)
    defaults = dict(
        intrinsics=k,
        planes=[synth.Plane(depth=2.0)],
        trajectory=synth.arc_trajectory(5),
        seed=0,
    )
    defaults.update(kw)
    return synth.SceneSpec(**defaults)


def test_validate_rejects_bad_scenes():
    with pytest.raises(InvalidArgumentError):
        _flat_spec(planes=[]).validate()
    with pytest.raises(InvalidArgumentError):
        _flat_spec(planes=[synth.Plane(depth=2.0, extent=(0, 1, 0, 1))]).validate()
    with pytest.raises(InvalidArgumentError):
        _flat_spec(trajectory=[]).validate()
    with pytest.raises(InvalidArgumentError):
        _flat_spec(
            degradations=[synth.Degradation(kind="sprite", region=(200, 0, 4, 4))]
        ).validate()
    _flat_spec().validate()


def test_unknown_degradation_kind_raises():
    spec = _flat_spec(degradations=[synth.Degradation(kind="fog", region=(1, 1, 4, 4))])
    with pytest.raises(InvalidArgumentError):
        synth.render_sequence(spec)


def test_sprite_updates_masks_and_depth():
    spec = _flat_spec(
        degradations=[
            synth.Degradation(kind="sprite", region=(10, 10, 8, 6), magnitude=1.2, motion=(1.0, 0.0))
        ]
    )
    frames, gt = synth.render_sequence(spec)
    assert gt.dynamic_masks[0][12, 12]
    assert not gt.dynamic_masks[0][40, 40]
    assert frames[0].depth[12, 12] == 1.2
    # Sprite moves one pixel per frame.
    assert gt.dynamic_masks[3][12, 13 + 2]


def test_depth_holes_zero_out_depth():
    spec = _flat_spec(
        degradations=[synth.Degradation(kind="depth_holes", region=(5, 5, 6, 4))]
    )
    frames, _ = synth.render_sequence(spec)
    assert np.all(frames[2].depth[5:9, 5:11] == 0.0)
    assert frames[2].depth[20, 20] > 0


def test_gain_offset_stays_clipped():
    spec = _flat_spec(
        degradations=[
            synth.Degradation(
                kind="gain_offset", region=(0, 0, 64, 48), magnitude=3.0, offset=0.2
            )
        ]
    )
    frames, _ = synth.render_sequence(spec)
    assert frames[0].intensity.max() <= 1.0
    assert frames[0].intensity.min() >= 0.0


def test_rendered_depth_is_closest_plane():
    k = Intrinsics(fx=60.0, fy=60.0, cx=31.5, cy=23.5, width=64, height=48)
    spec = synth.SceneSpec(
        intrinsics=k,
        planes=[
            synth.Plane(depth=3.0),
            synth.Plane(depth=1.5, extent=(-0.3, 0.3, -0.3, 0.3)),
        ],
        trajectory=[Se3Pose.identity()],
        seed=0,
    )
    frames, _ = synth.render_sequence(spec)
    # Center ray hits the near patch, corners see the background.
    assert frames[0].depth[24, 32] == pytest.approx(1.5, abs=1e-9)
    assert frames[0].depth[0, 0] == pytest.approx(3.0, abs=1e-9)
