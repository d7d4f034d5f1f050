import os
import shutil

import numpy as np
import pytest
import torch

from rgbdvo.providers import read_cmap as engine_read_cmap
from rgbdvo.quality import pairwise_quality

from votrainer.data import load_sequence
from votrainer.errors import CheckpointError, TrainingDivergedError
from votrainer.export import export_maps
from votrainer.model import UncertaintyNet
from votrainer.train import (
    TrainSpec,
    build_samples,
    load_checkpoint,
    sample_loss,
    save_checkpoint,
    train,
)


@pytest.fixture(scope="module")
def plain_samples(plain_seq_dir):
    return build_samples([plain_seq_dir])


def test_build_samples_counts_adjacent_pairs(plain_samples):
    assert len(plain_samples) == 5  # 6 frames -> 5 pairs


def test_short_training_decreases_loss(plain_samples):
    model, history = train(
        plain_samples, train_spec=TrainSpec(iterations=40, batch_size=2, seed=0)
    )
    assert len(history) == 40
    assert history[-1] < history[0]
    assert all(np.isfinite(history))


def test_training_is_seed_deterministic(plain_samples):
    spec = TrainSpec(iterations=8, batch_size=1, seed=3)
    _, hist_a = train(plain_samples, train_spec=spec)
    _, hist_b = train(plain_samples, train_spec=spec)
    assert hist_a == hist_b


def test_divergence_aborts_with_diagnostics(plain_samples):
    sample = plain_samples[0]
    bad = type(sample)(
        img_j=sample.img_j,
        img_i=sample.img_i,
        depth_j=sample.depth_j,
        depth_i=sample.depth_i,
        e_photo=torch.full_like(sample.e_photo, float("inf")),
        valid_photo=torch.ones_like(sample.valid_photo),
        e_geo=sample.e_geo,
        valid_geo=sample.valid_geo,
    )
    with pytest.raises(TrainingDivergedError) as info:
        train([bad], train_spec=TrainSpec(iterations=5, batch_size=1, seed=0))
    assert info.value.iteration == 0
    assert "non-finite loss" in str(info.value)


def test_checkpoint_roundtrip(tmp_path, plain_samples):
    model, _ = train(plain_samples, train_spec=TrainSpec(iterations=3, batch_size=1))
    path = str(tmp_path / "ckpt.pt")
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert loaded.spec == model.spec
    sample = plain_samples[0]
    with torch.no_grad():
        a = model(sample.img_j, sample.img_i, sample.depth_j, sample.depth_i)
        b = loaded(sample.img_j, sample.img_i, sample.depth_j, sample.depth_i)
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "missing.pt"))
    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(junk))


def test_sample_loss_differentiable(plain_samples):
    model = UncertaintyNet()
    loss = sample_loss(model, plain_samples[0], n_scales=2)
    loss.backward()
    grads = [p.grad for p in model.parameters() if p.grad is not None]
    assert grads and all(torch.isfinite(g).all() for g in grads)


def test_export_writes_one_map_per_adjacent_pair(tmp_path, plain_seq_dir):
    model = UncertaintyNet()
    out = str(tmp_path / "maps")
    paths = export_maps(model, plain_seq_dir, out)
    assert [os.path.basename(p) for p in paths] == [f"{t-1}_{t}.cmap" for t in range(1, 6)]
    lp, lg = engine_read_cmap(paths[0])
    seq = load_sequence(plain_seq_dir)
    assert lp.shape == (seq.height, seq.width)
    assert np.isfinite(lp).all() and np.isfinite(lg).all()


def test_exported_maps_yield_valid_quality(tmp_path, plain_seq_dir):
    """Round trip through the engine: quality values stay in [1e-4, 1]."""
    model = UncertaintyNet()
    paths = export_maps(model, plain_seq_dir, str(tmp_path / "maps"))
    for path in paths[:2]:
        lp, lg = engine_read_cmap(path)
        for plane, kind in ((lp, "photo"), (lg, "geo")):
            q = pairwise_quality(plane, kind)
            assert q.values.min() >= 1e-4 - 1e-12
            assert q.values.max() <= 1.0 + 1e-12


def test_export_needs_no_gt(tmp_path, plain_seq_dir):
    """Inference consumes only the RGB-D pairs: export succeeds on a dataset
    stripped of its trajectory, flow files, and masks."""
    stripped = tmp_path / "no_gt"
    shutil.copytree(plain_seq_dir, stripped)
    os.remove(stripped / "groundtruth.txt")
    shutil.rmtree(stripped / "flow")
    shutil.rmtree(stripped / "masks")
    model = UncertaintyNet()
    paths = export_maps(model, str(stripped), str(tmp_path / "maps"))
    assert len(paths) == 5
