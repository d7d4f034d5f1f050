"""Sequence-level orchestration: frame ingestion, keyframe management,
prior construction, tracking and trajectory assembly.

Ablation modes:
  - baseline: constant-provider semantics everywhere (quality identically 1),
    same code path as `full` so the two are bitwise identical under a
    ConstantProvider.
  - select: quality prior biases support-pixel selection, unit weights in
    the normal equations at every level.
  - full: prior-biased selection plus decoupled weighting at the finest
    pyramid level.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InvalidArgumentError,
    MissingGroundTruthError,
    ProviderIoError,
    TrackingDegenerateError,
)
from .evaluation import Trajectory
from .frames import RgbdFrame
from .geometry import Se3Pose, Z_MIN, se3_log, so3_log
from .providers import ConstantProvider, FileProvider, OracleProvider
from .quality import (
    QualityPrior,
    UncertaintyPair,
    finalize_prior,
    provisional_prior,
    weights_from_prior,
)
from .selector import select_support
from .tracker import Keyframe, TrackingConfig, track_frame

MODES = ("baseline", "select", "full")


@dataclass
class KeyframeConfig:
    tau_flow: float = 12.0  # px, mean support displacement
    tau_trans: float = 0.1  # m
    tau_rot_deg: float = 5.0
    min_valid_fraction: float = 0.5


@dataclass
class PipelineConfig:
    mode: str = "baseline"
    provider: str = "constant"  # constant | oracle | file:<dir>
    provider_sigma_noise: float = 0.0
    seed: int = 0
    window_size: int = 7
    budget: int = 800
    selector_block: int = 32
    selector_g_off: float = 7.0 / 255.0
    selector_theta_min: float = 7.0 / 255.0
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    keyframe: KeyframeConfig = field(default_factory=KeyframeConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")

    @staticmethod
    def from_file(path: str) -> "PipelineConfig":
        cfg = PipelineConfig()
        with open(path) as f:
            for ln_no, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InvalidArgumentError(f"{path}:{ln_no}: expected key = value")
                key, value = (s.strip() for s in line.split("=", 1))
                cfg.set_option(key, value)
        cfg.__post_init__()
        return cfg

    def set_option(self, key: str, value: str):
        scalar = {
            "mode": ("mode", str),
            "provider": ("provider", str),
            "provider.sigma_noise": ("provider_sigma_noise", float),
            "seed": ("seed", int),
            "window.size": ("window_size", int),
            "selector.budget": ("budget", int),
            "selector.block": ("selector_block", int),
            "selector.g_off": ("selector_g_off", float),
            "selector.theta_min": ("selector_theta_min", float),
        }
        tracker_keys = {
            "tracker.levels": ("levels", int),
            "tracker.max_iterations": ("max_iterations", int),
            "tracker.convergence_delta": ("convergence_delta", float),
            "tracker.huber_delta": ("huber_delta", float),
            "tracker.min_valid_fraction": ("min_valid_fraction", float),
        }
        kf_keys = {
            "keyframe.tau_flow": ("tau_flow", float),
            "keyframe.tau_trans": ("tau_trans", float),
            "keyframe.tau_rot_deg": ("tau_rot_deg", float),
            "keyframe.min_valid_fraction": ("min_valid_fraction", float),
        }
        if key in scalar:
            name, conv = scalar[key]
            setattr(self, name, conv(value))
        elif key in tracker_keys:
            name, conv = tracker_keys[key]
            setattr(self.tracking, name, conv(value))
        elif key in kf_keys:
            name, conv = kf_keys[key]
            setattr(self.keyframe, name, conv(value))
        else:
            raise InvalidArgumentError(f"unknown config key {key!r}")


def make_provider(config: PipelineConfig, gt_source=None):
    name = config.provider
    if config.mode == "baseline" or name == "constant":
        return ConstantProvider()
    if name == "oracle":
        if gt_source is None:
            raise MissingGroundTruthError("oracle provider needs a GT-bearing dataset")
        return OracleProvider(gt_source, config.provider_sigma_noise, config.seed)
    if name.startswith("file:"):
        return FileProvider(name[5:])
    raise InvalidArgumentError(f"unknown provider {name!r}")


@dataclass
class FrameReport:
    index: int
    timestamp: float
    energy: float = float("nan")
    valid_fraction: float = 0.0
    iterations: int = 0
    is_keyframe: bool = False
    fallback: bool = False
    events: list = field(default_factory=list)
    selection_used_prior: bool = False
    decoupled_applied: bool = False


class Pipeline:
    """Single-threaded frame-to-keyframe tracking pipeline."""

    def __init__(self, config: PipelineConfig, provider, cmap_sink=None):
        self.config = config
        self.provider = provider
        self.window = collections.deque(maxlen=config.window_size)
        self.keyframe = None
        self._kf_count = 0
        self._prev_frame = None
        self._world_poses = []
        self.timestamps = []
        self.reports = []
        # Optional callback(pair) used to export the provider's maps.
        self.cmap_sink = cmap_sink
        self._kf_awaiting_next_pair = False
        self._kf_is_unit_prior = True

    # -- prior/keyframe helpers -------------------------------------------

    def _create_keyframe(self, frame: RgbdFrame, world_pose: Se3Pose, pair, report):
        h, w = frame.shape
        if pair is not None:
            prior = provisional_prior(pair, frame.index)
        else:
            prior = QualityPrior.unit(h, w, frame.index)
        q_photo = prior.q_photo.values
        support = select_support(
            frame.intensity,
            frame.depth,
            q_photo,
            self.config.budget,
            seed=self.config.seed + self._kf_count,
            block=self.config.selector_block,
            g_off=self.config.selector_g_off,
            theta_min=self.config.selector_theta_min,
        )
        if not support:
            report.events.append("empty-selection")
            return False
        kf = Keyframe(
            frame=frame,
            world_pose=world_pose,
            prior=prior,
            support=support,
            index=self._kf_count,
        )
        self.keyframe = kf
        self.window.append(kf)
        self._kf_count += 1
        self._kf_awaiting_next_pair = True
        report.is_keyframe = True
        report.selection_used_prior = pair is not None and self.config.mode in ("select", "full")
        report.events.append(f"keyframe {kf.index} at frame {frame.index}")
        return True

    def _update_prior_after_tracking(self, pair):
        """Incorporate the keyframe's own (T, T+1) pair once it exists."""
        if not self._kf_awaiting_next_pair or pair is None:
            return
        kf = self.keyframe
        if kf.prior.finalized:
            return
        if self._kf_is_unit_prior:
            kf.prior = provisional_prior(pair, kf.prior.host_index)
            self._kf_is_unit_prior = False
        else:
            kf.prior = finalize_prior(kf.prior, pair)
        self._kf_awaiting_next_pair = False

    # -- constant-velocity model ------------------------------------------

    def _predict_world_pose(self) -> Se3Pose:
        if len(self._world_poses) >= 2:
            prev, prev2 = self._world_poses[-1], self._world_poses[-2]
            return prev.compose(prev2.inverse().compose(prev))
        return self._world_poses[-1]

    # -- keyframe criterion ------------------------------------------------

    def _keyframe_criterion(self, frame, rel_pose, valid_fraction) -> bool:
        cfg = self.config.keyframe
        if valid_fraction < cfg.min_valid_fraction:
            return True
        if np.linalg.norm(rel_pose.translation) > cfg.tau_trans:
            return True
        try:
            angle = float(np.linalg.norm(so3_log(rel_pose.rotation)))
        except Exception:
            angle = np.pi
        if angle > np.deg2rad(cfg.tau_rot_deg):
            return True
        return self._mean_support_displacement(rel_pose) > cfg.tau_flow

    def _mean_support_displacement(self, rel_pose) -> float:
        kf = self.keyframe
        k = kf.frame.intrinsics
        xs = np.array([sp.x for sp in kf.support], dtype=np.float64)
        ys = np.array([sp.y for sp in kf.support], dtype=np.float64)
        ds = np.array([sp.depth for sp in kf.support])
        pts = np.stack(
            [(xs - k.cx) / k.fx * ds, (ys - k.cy) / k.fy * ds, ds], axis=-1
        )
        moved = rel_pose.apply(pts)
        z = moved[:, 2]
        ok = z > Z_MIN
        if not np.any(ok):
            return float("inf")
        u = k.fx * moved[ok, 0] / z[ok] + k.cx
        v = k.fy * moved[ok, 1] / z[ok] + k.cy
        return float(np.mean(np.hypot(u - xs[ok], v - ys[ok])))

    # -- main entry ---------------------------------------------------------

    def process_frame(self, frame: RgbdFrame) -> FrameReport:
        report = FrameReport(index=frame.index, timestamp=frame.timestamp)
        pair = None
        if self._prev_frame is not None:
            try:
                pair = self.provider.get_uncertainty(self._prev_frame, frame)
            except (ProviderIoError, MissingGroundTruthError) as exc:
                report.events.append(f"provider-error: {exc}")
                report.fallback = True
                pair = ConstantProvider().get_uncertainty(self._prev_frame, frame)
            if self.cmap_sink is not None:
                self.cmap_sink(pair)

        if self.keyframe is None:
            # First frame bootstraps the map at the identity pose.
            self._kf_is_unit_prior = True
            self._create_keyframe(frame, Se3Pose.identity(), None, report)
            self._world_poses.append(Se3Pose.identity())
            self.timestamps.append(frame.timestamp)
            self.reports.append(report)
            self._prev_frame = frame
            return report

        # Track against the current keyframe under its current prior state.
        predicted = self._predict_world_pose()
        init_rel = predicted.inverse().compose(self.keyframe.world_pose)
        apply_decoupled = self.config.mode in ("baseline", "full")
        weights = weights_from_prior(self.keyframe.prior) if apply_decoupled else None
        report.decoupled_applied = apply_decoupled
        try:
            rel_pose, treport = track_frame(
                self.keyframe,
                frame,
                init_rel,
                self.config.tracking,
                weights=weights,
                apply_decoupled=apply_decoupled,
            )
            world_pose = self.keyframe.world_pose.compose(
                rel_pose.inverse()
            ).orthonormalized()
            report.energy = treport.final_energy
            report.valid_fraction = treport.final_valid_fraction
            report.iterations = sum(l.iterations for l in treport.levels)
        except (TrackingDegenerateError, DegenerateGeometryError) as exc:
            report.events.append(f"tracking-degenerate: {exc}")
            report.fallback = True
            world_pose = predicted.orthonormalized()
            rel_pose = world_pose.inverse().compose(self.keyframe.world_pose)

        # The keyframe's own (T, T+1) pair finalizes its prior for later frames.
        self._update_prior_after_tracking(pair)

        if self._keyframe_criterion(frame, rel_pose, report.valid_fraction):
            kf_pair = pair if self.config.mode in ("select", "full", "baseline") else None
            self._kf_is_unit_prior = kf_pair is None
            self._create_keyframe(frame, world_pose, kf_pair, report)

        self._world_poses.append(world_pose)
        self.timestamps.append(frame.timestamp)
        self.reports.append(report)
        self._prev_frame = frame
        return report

    def trajectory(self) -> Trajectory:
        return Trajectory(list(self.timestamps), list(self._world_poses))


def run_frames(frames, config: PipelineConfig, gt_source=None, cmap_sink=None):
    """Run the pipeline over an in-memory frame list."""
    provider = make_provider(config, gt_source)
    pipe = Pipeline(config, provider, cmap_sink=cmap_sink)
    for fr in frames:
        pipe.process_frame(fr)
    return pipe.trajectory(), pipe.reports


def run_sequence(dataset, config: PipelineConfig, cmap_sink=None):
    """Run the pipeline over a DatasetIndex; deterministic given config+seed."""
    gt_source = dataset.gt_source() if hasattr(dataset, "gt_source") else None
    provider = make_provider(config, gt_source)
    pipe = Pipeline(config, provider, cmap_sink=cmap_sink)
    for i in range(len(dataset)):
        pipe.process_frame(dataset.load_frame(i))
    return pipe.trajectory(), pipe.reports
