import numpy as np
import pytest

from rgbdvo.errors import (
    BehindCameraError,
    InvalidArgumentError,
    InvalidDepthError,
    NearSingularError,
    SampleOutOfBoundsError,
)
from rgbdvo.geometry import (
    Intrinsics,
    Se3Pose,
    backproject,
    bilinear_sample,
    build_pyramid,
    pool2x2,
    pose_distance,
    project,
    rgb_to_intensity,
    se3_exp,
    se3_log,
    skew,
    so3_log,
    warp_point,
)

RNG = np.random.default_rng(42)


def matrix_exp_series(a: np.ndarray, terms: int = 30) -> np.ndarray:
    """Truncated power-series matrix exponential, independent of the
    closed-form implementation under test."""
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def test_se3_exp_matches_matrix_exponential_series():
    for _ in range(200):
        xi = RNG.normal(0, 0.8, 6)
        pose = se3_exp(xi)
        a = np.zeros((4, 4))
        a[:3, :3] = skew(xi[3:])
        a[:3, 3] = xi[:3]
        m = matrix_exp_series(a)
        np.testing.assert_allclose(pose.matrix(), m, atol=1e-12)


def test_exp_log_roundtrip_across_scales():
    for scale in (1e-12, 1e-8, 1e-4, 1e-1, 1.0, 2.0):
        for _ in range(200):
            xi = RNG.normal(0, 1.0, 6)
            xi *= scale / max(np.linalg.norm(xi[3:]), 1e-300)
            back = se3_log(se3_exp(xi))
            np.testing.assert_allclose(back, xi, rtol=1e-7, atol=1e-12)


def test_log_exp_roundtrip_on_poses():
    for _ in range(300):
        xi = RNG.normal(0, 0.7, 6)
        pose = se3_exp(xi)
        again = se3_exp(se3_log(pose))
        np.testing.assert_allclose(again.matrix(), pose.matrix(), atol=1e-12)


def test_so3_log_raises_near_pi():
    rot = se3_exp(np.array([0, 0, 0, np.pi - 1e-9, 0, 0])).rotation
    with pytest.raises(NearSingularError):
        so3_log(rot)


def test_se3_exp_rejects_bad_twists():
    with pytest.raises(InvalidArgumentError):
        se3_exp(np.zeros(5))
    with pytest.raises(InvalidArgumentError):
        se3_exp(np.array([0.0, 0, 0, np.nan, 0, 0]))


def test_compose_inverse_identity():
    a = se3_exp(RNG.normal(0, 0.5, 6))
    ident = a.compose(a.inverse())
    np.testing.assert_allclose(ident.matrix(), np.eye(4), atol=1e-14)
    assert pose_distance(a, a) < 1e-15


def test_apply_matches_homogeneous_matrix():
    pose = se3_exp(RNG.normal(0, 0.5, 6))
    pts = RNG.normal(0, 2.0, (50, 3))
    hom = np.concatenate([pts, np.ones((50, 1))], axis=1)
    expected = (pose.matrix() @ hom.T).T[:, :3]
    np.testing.assert_allclose(pose.apply(pts), expected, atol=1e-13)


def test_orthonormalized_repairs_drifted_rotation():
    pose = se3_exp(RNG.normal(0, 0.5, 6))
    drifted = Se3Pose(pose.rotation + RNG.normal(0, 1e-4, (3, 3)), pose.translation)
    fixed = drifted.orthonormalized()
    np.testing.assert_allclose(fixed.rotation.T @ fixed.rotation, np.eye(3), atol=1e-12)
    assert np.linalg.det(fixed.rotation) > 0
    # An already-orthonormal rotation is a fixed point.
    again = fixed.orthonormalized()
    np.testing.assert_allclose(again.rotation, fixed.rotation, atol=1e-14)


K = Intrinsics(fx=140.0, fy=130.0, cx=47.5, cy=35.5, width=96, height=72)


def test_project_backproject_identity():
    pix = RNG.uniform(0, 95, (100, 2))
    depth = RNG.uniform(0.5, 5.0, 100)
    pts = backproject(K, pix, depth)
    out, z = project(K, pts)
    np.testing.assert_allclose(out, pix, atol=1e-10)
    np.testing.assert_allclose(z, depth, atol=1e-12)


def test_backproject_single_point_by_hand():
    pt = backproject(K, np.array([50.0, 40.0]), 2.0)
    np.testing.assert_allclose(
        pt, [2.0 * 2.5 / 140.0, 2.0 * 4.5 / 130.0, 2.0], atol=1e-15
    )


def test_backproject_rejects_invalid_depth():
    with pytest.raises(InvalidDepthError):
        backproject(K, np.array([10.0, 10.0]), 0.0)
    with pytest.raises(InvalidDepthError):
        backproject(K, np.array([10.0, 10.0]), np.nan)


def test_project_rejects_behind_camera():
    with pytest.raises(BehindCameraError):
        project(K, np.array([[0.0, 0.0, 0.0]]))
    with pytest.raises(BehindCameraError):
        project(K, np.array([[0.0, 0.0, -1.0]]))


def test_warp_point_identity_pose_is_noop():
    pix = RNG.uniform(5, 60, (20, 2))
    depth = RNG.uniform(1.0, 3.0, 20)
    out, z = warp_point(Se3Pose.identity(), K, pix, depth)
    np.testing.assert_allclose(out, pix, atol=1e-10)
    np.testing.assert_allclose(z, depth, atol=1e-12)


def test_warp_point_pure_z_translation_moves_toward_center():
    # Moving the camera forward shrinks the offset from the principal point.
    pix = np.array([60.0, 50.0])
    out, z = warp_point(se3_exp(np.array([0, 0, 0.5, 0, 0, 0])), K, pix, 2.0)
    assert z == pytest.approx(2.5)
    expected_u = K.fx * ((60.0 - K.cx) / K.fx * 2.0) / 2.5 + K.cx
    expected_v = K.fy * ((50.0 - K.cy) / K.fy * 2.0) / 2.5 + K.cy
    np.testing.assert_allclose(out, [expected_u, expected_v], atol=1e-12)


def test_intrinsics_validation():
    with pytest.raises(InvalidArgumentError):
        Intrinsics(fx=-1.0, fy=1.0, cx=1.0, cy=1.0, width=4, height=4)
    with pytest.raises(InvalidArgumentError):
        Intrinsics(fx=1.0, fy=1.0, cx=10.0, cy=1.0, width=4, height=4)


def test_intrinsics_at_level_preserves_rays():
    # The ray through a full-res pixel equals the ray through the matching
    # continuous coordinate at any level.
    k1 = K.at_level(1)
    assert (k1.fx, k1.fy) == (K.fx / 2, K.fy / 2)
    assert k1.cx == (K.cx + 0.5) / 2 - 0.5
    assert (k1.width, k1.height) == (48, 36)
    x, y = 13.0, 57.0
    xl, yl = (x + 0.5) / 2 - 0.5, (y + 0.5) / 2 - 0.5
    np.testing.assert_allclose(
        [(x - K.cx) / K.fx, (y - K.cy) / K.fy],
        [(xl - k1.cx) / k1.fx, (yl - k1.cy) / k1.fy],
        atol=1e-14,
    )


def test_bilinear_sample_exact_on_bilinear_surface():
    # f(x, y) = 2 + 0.5x - 0.25y + 0.1xy is reproduced exactly inside cells.
    ys, xs = np.mgrid[0:8, 0:10].astype(np.float64)
    img = 2.0 + 0.5 * xs - 0.25 * ys + 0.1 * xs * ys
    pts = RNG.uniform(0, [8.9, 6.9], (60, 2))
    vals, dx, dy = bilinear_sample(img, pts)
    x, y = pts[:, 0], pts[:, 1]
    np.testing.assert_allclose(vals, 2.0 + 0.5 * x - 0.25 * y + 0.1 * x * y, atol=1e-12)
    # Derivatives of the interpolant within a cell use the cell-corner ys/xs.
    x0 = np.floor(x)
    y0 = np.floor(y)
    np.testing.assert_allclose(dx, 0.5 + 0.1 * (y0 + (y - y0)), atol=1e-12)
    np.testing.assert_allclose(dy, -0.25 + 0.1 * x, atol=1e-12)


def test_bilinear_sample_gradients_match_finite_differences():
    img = RNG.uniform(0, 1, (16, 16))
    pts = RNG.uniform(1.1, 13.7, (40, 2))
    eps = 1e-7
    _, dx, dy = bilinear_sample(img, pts)
    vx1, _, _ = bilinear_sample(img, pts + [eps, 0])
    vx0, _, _ = bilinear_sample(img, pts - [eps, 0])
    vy1, _, _ = bilinear_sample(img, pts + [0, eps])
    vy0, _, _ = bilinear_sample(img, pts - [0, eps])
    np.testing.assert_allclose(dx, (vx1 - vx0) / (2 * eps), atol=1e-6)
    np.testing.assert_allclose(dy, (vy1 - vy0) / (2 * eps), atol=1e-6)


def test_bilinear_sample_edges_and_bounds():
    img = np.arange(12, dtype=np.float64).reshape(3, 4)
    val, _, _ = bilinear_sample(img, np.array([3.0, 2.0]))  # exact far corner
    assert val == img[2, 3]
    with pytest.raises(SampleOutOfBoundsError):
        bilinear_sample(img, np.array([3.0001, 1.0]))
    with pytest.raises(SampleOutOfBoundsError):
        bilinear_sample(img, np.array([-0.0001, 1.0]))


def test_pool2x2_partial_blocks():
    img = np.array(
        [
            [1.0, 2.0, 3.0],
            [4.0, 5.0, 6.0],
            [7.0, 8.0, 9.0],
        ]
    )
    out = pool2x2(img)
    expected = np.array(
        [
            [(1 + 2 + 4 + 5) / 4.0, (3 + 6) / 2.0],
            [(7 + 8) / 2.0, 9.0],
        ]
    )
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_build_pyramid_shapes_and_level_zero():
    img = RNG.uniform(0, 1, (21, 30))
    pyr = build_pyramid(img, 4)
    assert [p.shape for p in pyr] == [(21, 30), (11, 15), (6, 8), (3, 4)]
    np.testing.assert_array_equal(pyr[0], img)
    with pytest.raises(InvalidArgumentError):
        build_pyramid(img, 0)


def test_rgb_to_intensity_luma_weights():
    rgb = np.zeros((2, 2, 3))
    rgb[..., 0] = 1.0
    np.testing.assert_allclose(rgb_to_intensity(rgb), 0.299)
    gray = RNG.uniform(0, 1, (3, 3))
    np.testing.assert_array_equal(rgb_to_intensity(gray), gray)
