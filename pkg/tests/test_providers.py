import numpy as np
import pytest

from rgbdvo.errors import MissingGroundTruthError, ProviderIoError
from rgbdvo.providers import (
    ORACLE_INVALID_ERROR,
    ORACLE_LOG_FLOOR,
    ConstantProvider,
    FileProvider,
    OracleProvider,
    cmap_filename,
    read_cmap,
    write_cmap,
)

RNG = np.random.default_rng(23)


def test_cmap_roundtrip_is_bit_exact(tmp_path):
    lp = RNG.normal(0, 1, (12, 17)).astype(np.float32)
    lg = RNG.normal(0, 1, (12, 17)).astype(np.float32)
    path = tmp_path / "0_1.cmap"
    write_cmap(str(path), lp, lg)
    rp, rg = read_cmap(str(path))
    np.testing.assert_array_equal(rp, lp)
    np.testing.assert_array_equal(rg, lg)
    # Header layout: magic, version, width, height, channel count.
    data = path.read_bytes()
    assert data[:4] == b"CMAP"
    assert len(data) == 20 + 2 * 4 * 12 * 17


def test_read_cmap_rejects_corrupt_files(tmp_path):
    good = tmp_path / "g.cmap"
    write_cmap(str(good), np.zeros((4, 4), np.float32), np.zeros((4, 4), np.float32))
    bad_magic = tmp_path / "bad1.cmap"
    bad_magic.write_bytes(b"XMAP" + good.read_bytes()[4:])
    with pytest.raises(ProviderIoError):
        read_cmap(str(bad_magic))
    truncated = tmp_path / "bad2.cmap"
    truncated.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(ProviderIoError):
        read_cmap(str(truncated))
    with pytest.raises(ProviderIoError):
        read_cmap(str(tmp_path / "missing.cmap"))
    with pytest.raises(ProviderIoError):
        write_cmap(str(tmp_path / "x.cmap"), np.zeros((2, 2)), np.zeros((2, 3)))


def test_cmap_filename_convention():
    assert cmap_filename(3, 4) == "3_4.cmap"


def test_constant_provider_is_zero(small_scene):
    frames, _ = small_scene
    pair = ConstantProvider().get_uncertainty(frames[0], frames[1])
    assert pair.frame_j == 0 and pair.frame_i == 1
    assert np.all(pair.log_photo == 0.0) and np.all(pair.log_geo == 0.0)


def test_oracle_provider_log_floor_and_invalid_handling(small_scene):
    frames, gt = small_scene
    provider = OracleProvider(gt)
    pair = provider.get_uncertainty(frames[0], frames[1])
    fl = gt.flows[(0, 1)]
    # Pixels the oracle cannot evaluate get the maximal-error log value.
    invalid_log = np.log(ORACLE_INVALID_ERROR + ORACLE_LOG_FLOOR)
    assert np.all(pair.log_photo[~fl.valid] == invalid_log)
    # All values are finite and floored at ln(floor).
    assert np.all(np.isfinite(pair.log_photo))
    assert pair.log_photo.min() >= np.log(ORACLE_LOG_FLOOR) - 1e-12


def test_oracle_provider_noise_is_seeded(small_scene):
    frames, gt = small_scene
    a = OracleProvider(gt, sigma_noise=0.2, seed=5).get_uncertainty(frames[0], frames[1])
    b = OracleProvider(gt, sigma_noise=0.2, seed=5).get_uncertainty(frames[0], frames[1])
    c = OracleProvider(gt, sigma_noise=0.2, seed=6).get_uncertainty(frames[0], frames[1])
    np.testing.assert_array_equal(a.log_photo, b.log_photo)
    assert not np.array_equal(a.log_photo, c.log_photo)


def test_oracle_provider_missing_pair_raises(small_scene):
    frames, gt = small_scene
    with pytest.raises(MissingGroundTruthError):
        OracleProvider(gt).get_uncertainty(frames[0], frames[5])
    with pytest.raises(MissingGroundTruthError):
        OracleProvider(None)


def test_file_provider_reads_and_validates(tmp_path, small_scene):
    frames, _ = small_scene
    h, w = frames[0].shape
    lp = RNG.normal(0, 1, (h, w)).astype(np.float32)
    lg = RNG.normal(0, 1, (h, w)).astype(np.float32)
    write_cmap(str(tmp_path / cmap_filename(0, 1)), lp, lg)
    pair = FileProvider(str(tmp_path)).get_uncertainty(frames[0], frames[1])
    np.testing.assert_allclose(pair.log_photo, lp, atol=1e-7)
    with pytest.raises(ProviderIoError):
        FileProvider(str(tmp_path)).get_uncertainty(frames[1], frames[2])
    write_cmap(
        str(tmp_path / cmap_filename(1, 2)),
        np.zeros((4, 4), np.float32),
        np.zeros((4, 4), np.float32),
    )
    with pytest.raises(ProviderIoError):
        FileProvider(str(tmp_path)).get_uncertainty(frames[1], frames[2])
