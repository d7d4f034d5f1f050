"""Toy dual-branch uncertainty network trainer.

Trains a small two-head CNN to predict per-pixel photometric and geometric
log-covariance maps for RGB-D frame pairs, supervised by ground-truth
consistency errors from synthetic sequences. Exported .cmap files plug into
the odometry pipeline's file provider.

This package talks to the odometry engine only through files: the synth
dataset layout and the .cmap map format. It deliberately imports nothing
from it.
"""

from .cmapio import cmap_filename, read_cmap, write_cmap
from .data import SequenceData, load_sequence
from .errors import CheckpointError, DataError, TrainingDivergedError
from .export import export_maps
from .loss import masked_nll, multiscale_nll
from .model import NetworkSpec, UncertaintyNet
from .targets import TargetMaps, build_targets
from .train import TrainSpec, build_samples, load_checkpoint, save_checkpoint, train

__all__ = [
    "CheckpointError",
    "DataError",
    "NetworkSpec",
    "SequenceData",
    "TargetMaps",
    "TrainSpec",
    "TrainingDivergedError",
    "UncertaintyNet",
    "build_samples",
    "build_targets",
    "cmap_filename",
    "export_maps",
    "load_checkpoint",
    "load_sequence",
    "masked_nll",
    "multiscale_nll",
    "read_cmap",
    "save_checkpoint",
    "train",
    "write_cmap",
]
