"""Training loop: AdamW on the multi-scale NLL over both heads.

Samples are adjacent frame pairs with precomputed GT consistency targets.
Targets never enter the network forward pass; they only score its output.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

from .data import SequenceData, load_sequence
from .errors import CheckpointError, DataError, TrainingDivergedError
from .loss import multiscale_nll
from .model import NetworkSpec, UncertaintyNet
from .targets import build_targets

CHECKPOINT_VERSION = 1

# Training-target floor, matching the log-map convention l = ln(e + floor).
# Without it, zero-error pixels make the NLL unbounded below (the gradient
# pushes l toward -inf forever) and training never settles.
E_FLOOR = 1e-3


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float = 8e-4
    weight_decay: float = 1e-4
    batch_size: int = 2
    iterations: int = 300
    n_scales: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_scales < 1:
            raise ValueError("need at least one loss scale")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch size must be positive")


@dataclass
class Sample:
    """One adjacent frame pair: network inputs plus detached targets."""

    img_j: torch.Tensor
    img_i: torch.Tensor
    depth_j: torch.Tensor
    depth_i: torch.Tensor
    e_photo: torch.Tensor
    valid_photo: torch.Tensor
    e_geo: torch.Tensor
    valid_geo: torch.Tensor


def make_sample(seq: SequenceData, frame_j: int, frame_i: int) -> Sample:
    tg = build_targets(seq, frame_j, frame_i)
    as_t = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
    return Sample(
        img_j=as_t(seq.intensities[frame_j]),
        img_i=as_t(seq.intensities[frame_i]),
        depth_j=as_t(seq.depths[frame_j]),
        depth_i=as_t(seq.depths[frame_i]),
        e_photo=as_t(tg.e_photo + E_FLOOR),
        valid_photo=torch.from_numpy(tg.valid_photo.copy()),
        e_geo=as_t(tg.e_geo + E_FLOOR),
        valid_geo=torch.from_numpy(tg.valid_geo.copy()),
    )


def build_samples(roots) -> list:
    """All adjacent pairs (t-1, t) across the given sequence directories."""
    samples = []
    for root in roots:
        seq = load_sequence(root)
        if not seq.has_gt():
            raise DataError(f"{root}: training needs GT flow and trajectory")
        for t in range(1, len(seq)):
            samples.append(make_sample(seq, t - 1, t))
    if not samples:
        raise DataError("no training pairs found")
    return samples


def sample_loss(model: UncertaintyNet, sample: Sample, n_scales: int) -> torch.Tensor:
    log_photo, log_geo = model(
        sample.img_j, sample.img_i, sample.depth_j, sample.depth_i
    )
    loss_p = multiscale_nll(
        sample.e_photo[None, None], log_photo, sample.valid_photo[None, None], n_scales
    )
    loss_g = multiscale_nll(
        sample.e_geo[None, None], log_geo, sample.valid_geo[None, None], n_scales
    )
    return 0.5 * (loss_p + loss_g)


def train(
    samples,
    net_spec: NetworkSpec = NetworkSpec(),
    train_spec: TrainSpec = TrainSpec(),
    log_every: int = 0,
    stop_below: float = None,
):
    """Returns (model, loss history). Raises TrainingDivergedError on a
    non-finite loss, reporting the iteration and recent loss values."""
    torch.manual_seed(train_spec.seed)
    rng = np.random.default_rng(train_spec.seed)
    model = UncertaintyNet(net_spec)
    opt = torch.optim.AdamW(
        model.parameters(),
        lr=train_spec.learning_rate,
        weight_decay=train_spec.weight_decay,
    )
    # Cosine decay settles the run into one minimum; at a constant step size
    # the late iterations keep bouncing between basins.
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=train_spec.iterations
    )
    history = []
    for it in range(train_spec.iterations):
        opt.zero_grad()
        picks = rng.integers(0, len(samples), size=min(train_spec.batch_size, len(samples)))
        loss = torch.stack(
            [sample_loss(model, samples[int(k)], train_spec.n_scales) for k in picks]
        ).mean()
        value = float(loss.detach())
        if not np.isfinite(value):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {it}; recent losses: "
                f"{[round(v, 4) for v in history[-5:]]}",
                iteration=it,
                recent_losses=history[-5:],
            )
        loss.backward()
        opt.step()
        scheduler.step()
        history.append(value)
        if log_every and (it % log_every == 0 or it == train_spec.iterations - 1):
            print(f"iter {it:5d}  loss {value:.5f}", flush=True)
        if stop_below is not None and value < stop_below:
            break
    model.eval()
    return model, history


def save_checkpoint(path: str, model: UncertaintyNet) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "network_spec": model.spec.to_dict(),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str) -> UncertaintyNet:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint layout")
    model = UncertaintyNet(NetworkSpec.from_dict(blob["network_spec"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
