import numpy as np
import pytest

from rgbdvo.errors import InvalidArgumentError
from rgbdvo.quality import (
    EPS_Q,
    EPS_W,
    QualityMap,
    QualityPrior,
    UncertaintyPair,
    finalize_prior,
    fuse_bidirectional,
    pairwise_quality,
    provisional_prior,
    weights_from_prior,
)

RNG = np.random.default_rng(11)


def test_pairwise_quality_shift_invariance():
    log_cov = RNG.normal(0, 1.0, (16, 16))
    base = pairwise_quality(log_cov, "photo")
    for c in (-3.0, 0.7, 10.0):
        shifted = pairwise_quality(log_cov + c, "photo")
        np.testing.assert_allclose(shifted.values, base.values, atol=1e-12)


def test_pairwise_quality_median_pixel_maps_to_one():
    # Odd pixel count with unique values: the median is an element, and its
    # quality is exactly 1 before (and after) clipping.
    log_cov = RNG.normal(0, 0.5, (5, 5))
    q = pairwise_quality(log_cov, "geo")
    med_pos = np.unravel_index(
        np.argsort(log_cov.ravel())[log_cov.size // 2], log_cov.shape
    )
    assert q.values[med_pos] == 1.0


def test_pairwise_quality_clip_bounds():
    log_cov = np.array([[0.0, 100.0, -100.0]])
    q = pairwise_quality(log_cov, "photo")
    assert q.values.min() == EPS_Q
    assert q.values.max() == 1.0
    assert np.all((q.values >= EPS_Q) & (q.values <= 1.0))
    with pytest.raises(InvalidArgumentError):
        pairwise_quality(np.zeros((0,)), "photo")


def test_fusion_symmetry_idempotence_log_mean():
    a = QualityMap(RNG.uniform(EPS_Q, 1.0, (12, 12)), "photo")
    b = QualityMap(RNG.uniform(EPS_Q, 1.0, (12, 12)), "photo")
    ab = fuse_bidirectional(a, b)
    ba = fuse_bidirectional(b, a)
    np.testing.assert_allclose(ab.values, ba.values, atol=1e-12)
    aa = fuse_bidirectional(a, a)
    np.testing.assert_allclose(aa.values, a.values, atol=1e-12)
    # Geometric mean == arithmetic mean in the log domain.
    np.testing.assert_allclose(
        np.log(ab.values), 0.5 * (np.log(a.values) + np.log(b.values)), atol=1e-12
    )


def test_fusion_rejects_mismatched_inputs():
    a = QualityMap(np.ones((4, 4)), "photo")
    with pytest.raises(InvalidArgumentError):
        fuse_bidirectional(a, QualityMap(np.ones((4, 4)), "geo"))
    with pytest.raises(InvalidArgumentError):
        fuse_bidirectional(a, QualityMap(np.ones((4, 5)), "photo"))


def test_fusion_halves_log_domain_variance():
    # Averaging two independent log-quality samples halves the variance.
    n = 100_000
    sigma = 0.3
    x1 = RNG.normal(-2.0, sigma, n)
    x2 = RNG.normal(-2.0, sigma, n)
    a = QualityMap(np.exp(x1).reshape(1, -1), "photo")
    b = QualityMap(np.exp(x2).reshape(1, -1), "photo")
    fused = fuse_bidirectional(a, b)
    var = np.var(np.log(fused.values))
    assert abs(var - sigma**2 / 2.0) < 0.05 * sigma**2 / 2.0


def test_uncertainty_pair_validation():
    with pytest.raises(InvalidArgumentError):
        UncertaintyPair(np.zeros((4, 4)), np.zeros((4, 5)), 0, 1)
    with pytest.raises(InvalidArgumentError):
        UncertaintyPair(np.full((4, 4), np.nan), np.zeros((4, 4)), 0, 1)


def test_prior_lifecycle_and_weights():
    pair01 = UncertaintyPair(
        RNG.normal(0, 1, (6, 6)), RNG.normal(0, 1, (6, 6)), 0, 1
    )
    pair12 = UncertaintyPair(
        RNG.normal(0, 1, (6, 6)), RNG.normal(0, 1, (6, 6)), 1, 2
    )
    prior = provisional_prior(pair01, host_index=1)
    assert not prior.finalized
    np.testing.assert_array_equal(
        prior.q_photo.values, pairwise_quality(pair01.log_photo, "photo").values
    )
    final = finalize_prior(prior, pair12)
    assert final.finalized
    expected = fuse_bidirectional(
        pairwise_quality(pair01.log_photo, "photo"),
        pairwise_quality(pair12.log_photo, "photo"),
    )
    np.testing.assert_array_equal(final.q_photo.values, expected.values)

    w = weights_from_prior(final)
    np.testing.assert_allclose(
        w.w_photo, np.sqrt(final.q_photo.values + EPS_W), atol=1e-15
    )
    np.testing.assert_allclose(
        w.w_geo, np.sqrt(final.q_geo.values + EPS_W), atol=1e-15
    )


def test_unit_prior_yields_uniform_weights():
    prior = QualityPrior.unit(5, 7, host_index=0)
    assert prior.q_photo.values.shape == (5, 7)
    w = weights_from_prior(prior)
    np.testing.assert_allclose(w.w_photo, np.sqrt(1.0 + EPS_W), atol=1e-15)
    np.testing.assert_allclose(w.w_geo, np.sqrt(1.0 + EPS_W), atol=1e-15)
