"""Deterministic synthetic RGB-D sequence generator with ground truth.

Scenes are textured fronto-parallel planes (world z = const, optionally
finite rectangles) rendered by exact ray-plane intersection, so depth and
flow have closed forms. Textures are band-limited sums of sinusoids, giving
the gradient-based selector candidates everywhere. Controlled degradations
(moving sprites, illumination gain/highlights, depth holes/noise) are
applied after rendering, with ground-truth flow and dynamic masks updated
where the degradation is geometric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .consistency import FlowField
from .errors import InvalidArgumentError
from .frames import RgbdFrame
from .geometry import Intrinsics, Se3Pose, Z_MIN, se3_exp

# Depth-slack used when deciding whether a reprojected point is occluded by
# nearer static geometry in the other frame.
OCCLUSION_TOL = 1e-3


@dataclass
class Plane:
    """Textured world plane z = depth; extent (x_min, x_max, y_min, y_max)
    in world meters, or None for an infinite background plane."""

    depth: float
    extent: tuple = None
    texture_freq: float = 6.0  # max spatial frequency, cycles/meter
    contrast: float = 0.42


@dataclass
class Degradation:
    kind: str  # sprite | gain_offset | highlight | depth_holes | depth_noise
    region: tuple  # (x, y, w, h) pixels, frame-0 placement
    magnitude: float = 1.0
    motion: tuple = (0.0, 0.0)  # pixels/frame (sprite, highlight)
    offset: float = 0.0  # additive term for gain_offset
    drift: float = 0.0  # per-frame gain increment for gain_offset


@dataclass
class SceneSpec:
    intrinsics: Intrinsics
    planes: list
    trajectory: list  # camera-to-world Se3Pose per frame
    seed: int = 0
    degradations: list = field(default_factory=list)
    fps: float = 30.0

    def validate(self):
        problems = []
        if not self.planes:
            problems.append("scene needs at least one plane")
        for i, pl in enumerate(self.planes):
            if pl.depth <= Z_MIN:
                problems.append(f"plane {i} depth {pl.depth} <= z_min")
        if not self.trajectory:
            problems.append("empty trajectory")
        if not any(pl.extent is None for pl in self.planes):
            problems.append("need an infinite background plane")
        w, h = self.intrinsics.width, self.intrinsics.height
        for i, d in enumerate(self.degradations):
            x, y, rw, rh = d.region
            if not (0 <= x < w and 0 <= y < h and rw > 0 and rh > 0):
                problems.append(f"degradation {i} region outside image")
            if not np.all(np.isfinite([d.magnitude, d.offset, d.drift, *d.motion])):
                problems.append(f"degradation {i} has non-finite parameters")
        if problems:
            raise InvalidArgumentError("; ".join(problems))

    @property
    def frame_count(self):
        return len(self.trajectory)


def _texture(seed: int, max_freq: float, contrast: float):
    """Band-limited procedural texture: callable over world/patch coords.

    A low-frequency gating plaid keeps most of the surface flat with sparse
    strong features, so the selector's median-based adaptive threshold stays
    near its floor and yields many candidates.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n = 12
    angles = rng.uniform(0, 2 * np.pi, n)
    freqs = rng.uniform(0.5 * max_freq, max_freq, n)
    fx = freqs * np.cos(angles)
    fy = freqs * np.sin(angles)
    phases = rng.uniform(0, 2 * np.pi, n)
    amps = rng.uniform(0.4, 1.0, n)
    amps *= contrast / np.sum(np.abs(amps))
    gate_freq = rng.uniform(0.5, 0.9, 2)
    gate_phase = rng.uniform(0, 2 * np.pi, 2)

    def tex(x, y):
        plaid = np.sin(2 * np.pi * gate_freq[0] * x + gate_phase[0]) * np.sin(
            2 * np.pi * gate_freq[1] * y + gate_phase[1]
        )
        gate = np.clip(2.5 * plaid - 1.0, 0.0, 1.0)
        acc = np.zeros(np.shape(x))
        for k in range(n):
            acc = acc + amps[k] * np.sin(2 * np.pi * (fx[k] * x + fy[k] * y) + phases[k])
        return np.clip(0.5 + gate * acc, 0.0, 1.0)

    return tex


@dataclass
class GroundTruthBundle:
    """Per-frame GT the oracles and trainers consume; also serves as the
    in-memory GroundTruthSource for the oracle provider."""

    poses: list  # camera-to-world Se3Pose per frame
    depths: list  # observed depth maps (post-degradation)
    flows: dict  # (j, i) -> FlowField on frame i's grid
    dynamic_masks: list  # bool mask per frame
    intrinsics: Intrinsics = None

    def flow(self, frame_j: int, frame_i: int) -> FlowField:
        return self.flows[(frame_j, frame_i)]

    def relative_pose(self, frame_j: int, frame_i: int) -> Se3Pose:
        # Maps frame-j camera coordinates into frame-i camera coordinates.
        return self.poses[frame_i].inverse().compose(self.poses[frame_j])


def _render_static(spec: SceneSpec, pose_wc: Se3Pose, textures):
    """Render one frame: returns (intensity, depth, world points)."""
    k = spec.intrinsics
    h, w = k.height, k.width
    ys, xs = np.mgrid[0:h, 0:w]
    dirs_c = np.stack(
        [(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones((h, w))], axis=-1
    )
    dirs_w = dirs_c @ pose_wc.rotation.T
    c = pose_wc.translation

    depth = np.full((h, w), np.inf)
    intensity = np.zeros((h, w))
    world = np.zeros((h, w, 3))
    for idx, pl in enumerate(spec.planes):
        dz = dirs_w[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (pl.depth - c[2]) / dz
        hit = np.isfinite(s) & (s > Z_MIN)
        px = c[0] + s * dirs_w[..., 0]
        py = c[1] + s * dirs_w[..., 1]
        if pl.extent is not None:
            x0, x1, y0, y1 = pl.extent
            hit &= (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
        closer = hit & (s < depth)
        if not np.any(closer):
            continue
        depth = np.where(closer, s, depth)
        vals = textures[idx](px[closer], py[closer])
        intensity[closer] = vals
        world[closer] = np.stack(
            [px[closer], py[closer], np.full(vals.shape, pl.depth)], axis=-1
        )
    if not np.all(np.isfinite(depth)):
        raise InvalidArgumentError("some rays hit no plane; add a background plane")
    return intensity, depth, world


def _flow_from_world(
    spec: SceneSpec, world_i: np.ndarray, pose_j: Se3Pose, depth_j: np.ndarray
) -> FlowField:
    """Flow on frame i's grid toward frame j, with static-occlusion masking."""
    k = spec.intrinsics
    h, w = k.height, k.width
    ys, xs = np.mgrid[0:h, 0:w]
    pts_j = (world_i.reshape(-1, 3) - pose_j.translation) @ pose_j.rotation
    z = pts_j[:, 2].reshape(h, w)
    front = z > Z_MIN
    zs = np.where(front, z, 1.0)
    u_j = k.fx * pts_j[:, 0].reshape(h, w) / zs + k.cx
    v_j = k.fy * pts_j[:, 1].reshape(h, w) / zs + k.cy
    flow = np.stack([xs - u_j, ys - v_j], axis=-1)
    valid = front.copy()

    # Occlusion by nearer static geometry in frame j.
    un = np.clip(np.round(u_j).astype(np.intp), 0, w - 1)
    vn = np.clip(np.round(v_j).astype(np.intp), 0, h - 1)
    inb = front & (u_j >= 0) & (u_j <= w - 1) & (v_j >= 0) & (v_j <= h - 1)
    occluded = inb & (depth_j[vn, un] < z - OCCLUSION_TOL)
    valid &= ~occluded
    flow[~valid] = np.nan
    return FlowField(flow, valid)


def _sprite_footprint(region, motion, t, shape):
    x, y, rw, rh = region
    h, w = shape
    x0 = int(round(x + motion[0] * t))
    y0 = int(round(y + motion[1] * t))
    xa, xb = max(x0, 0), min(x0 + rw, w)
    ya, yb = max(y0, 0), min(y0 + rh, h)
    mask = np.zeros(shape, dtype=bool)
    if xa < xb and ya < yb:
        mask[ya:yb, xa:xb] = True
    return mask, (x0, y0)


def apply_degradation(frames, gt: GroundTruthBundle, d: Degradation, seed: int = 0):
    """Apply one degradation in place, updating frames and ground truth."""
    h, w = frames[0].shape
    n = len(frames)
    if d.kind == "sprite":
        tex = _texture(seed ^ 0x5B17E, max_freq=0.12, contrast=0.5)
        ys, xs = np.mgrid[0:h, 0:w]
        prev_mask = None
        for t in range(n):
            mask, (ox, oy) = _sprite_footprint(d.region, d.motion, t, (h, w))
            if np.any(mask):
                frames[t].intensity[mask] = tex(xs[mask] - ox, ys[mask] - oy)
                frames[t].depth[mask] = d.magnitude
            gt.dynamic_masks[t] |= mask
            if prev_mask is not None:
                gt.dynamic_masks[t] |= prev_mask
                fl = gt.flows[(t - 1, t)]
                fl.flow[mask] = np.array(d.motion)
                fl.valid |= mask
            prev_mask = mask
    elif d.kind == "gain_offset":
        x, y, rw, rh = (int(v) for v in d.region)
        for t in range(n):
            g = d.magnitude + d.drift * t
            patch = frames[t].intensity[y : y + rh, x : x + rw]
            frames[t].intensity[y : y + rh, x : x + rw] = np.clip(
                g * patch + d.offset, 0.0, 1.0
            )
    elif d.kind == "highlight":
        x, y, rw, rh = d.region
        sigma = max(rw, rh) / 4.0
        ys, xs = np.mgrid[0:h, 0:w]
        for t in range(n):
            cx = x + rw / 2.0 + d.motion[0] * t
            cy = y + rh / 2.0 + d.motion[1] * t
            blob = d.magnitude * np.exp(
                -((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2)
            )
            frames[t].intensity[:] = np.clip(frames[t].intensity + blob, 0.0, 1.0)
    elif d.kind == "depth_holes":
        x, y, rw, rh = (int(v) for v in d.region)
        for t in range(n):
            frames[t].depth[y : y + rh, x : x + rw] = 0.0
    elif d.kind == "depth_noise":
        x, y, rw, rh = (int(v) for v in d.region)
        rng = np.random.Generator(np.random.PCG64(seed ^ 0xD3B7))
        for t in range(n):
            noise = rng.normal(1.0, d.magnitude, (rh, rw))
            frames[t].depth[y : y + rh, x : x + rw] *= np.abs(noise)
    else:
        raise InvalidArgumentError(f"unknown degradation kind {d.kind!r}")


def render_sequence(spec: SceneSpec):
    """Render the full sequence; returns (frames, GroundTruthBundle)."""
    spec.validate()
    seeds = np.random.SeedSequence(spec.seed).generate_state(len(spec.planes) + len(spec.degradations) + 1)
    textures = [
        _texture(int(seeds[i]), pl.texture_freq, pl.contrast)
        for i, pl in enumerate(spec.planes)
    ]
    k = spec.intrinsics
    frames = []
    worlds = []
    depths = []
    for t, pose in enumerate(spec.trajectory):
        intensity, depth, world = _render_static(spec, pose, textures)
        frames.append(
            RgbdFrame(
                index=t,
                timestamp=t / spec.fps,
                intensity=intensity,
                depth=depth,
                intrinsics=k,
            )
        )
        worlds.append(world)
        depths.append(depth)

    flows = {}
    for t in range(1, spec.frame_count):
        flows[(t - 1, t)] = _flow_from_world(
            spec, worlds[t], spec.trajectory[t - 1], depths[t - 1]
        )
    gt = GroundTruthBundle(
        poses=list(spec.trajectory),
        depths=[f.depth for f in frames],
        flows=flows,
        dynamic_masks=[np.zeros((k.height, k.width), dtype=bool) for _ in frames],
        intrinsics=k,
    )
    for i, d in enumerate(spec.degradations):
        apply_degradation(frames, gt, d, seed=int(seeds[len(spec.planes) + i]))
    return frames, gt


def arc_trajectory(
    frames: int,
    trans_amp=(0.05, 0.03, 0.04),
    rot_amp=(0.01, 0.015, 0.01),
    period: float = 120.0,
) -> list:
    """Smooth sinusoidal camera trajectory starting at the identity."""
    poses = []
    for t in range(frames):
        ph = 2 * np.pi * t / period
        xi = np.array(
            [
                trans_amp[0] * np.sin(ph),
                trans_amp[1] * np.sin(ph + 1.3),
                trans_amp[2] * np.sin(ph + 2.1),
                rot_amp[0] * np.sin(ph + 0.7),
                rot_amp[1] * np.sin(ph + 1.9),
                rot_amp[2] * np.sin(ph + 3.1),
            ]
        )
        xi -= np.array(
            [
                trans_amp[0] * np.sin(0),
                trans_amp[1] * np.sin(1.3),
                trans_amp[2] * np.sin(2.1),
                rot_amp[0] * np.sin(0.7),
                rot_amp[1] * np.sin(1.9),
                rot_amp[2] * np.sin(3.1),
            ]
        )
        poses.append(se3_exp(xi))
    return poses


def default_scene(
    frames: int = 50,
    seed: int = 0,
    width: int = 160,
    height: int = 120,
    degradations=None,
    trans_amp=(0.05, 0.03, 0.04),
    rot_amp=(0.01, 0.015, 0.01),
) -> SceneSpec:
    """Two textured patches over an infinite background plane."""
    k = Intrinsics(
        fx=140.0, fy=140.0, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
    )
    planes = [
        Plane(depth=2.5, extent=None, texture_freq=3.0, contrast=1.0),
        Plane(depth=1.8, extent=(-0.9, -0.1, -0.7, 0.3), texture_freq=3.5, contrast=1.0),
        Plane(depth=2.1, extent=(0.1, 1.0, -0.2, 0.8), texture_freq=3.2, contrast=1.0),
    ]
    return SceneSpec(
        intrinsics=k,
        planes=planes,
        trajectory=arc_trajectory(frames, trans_amp=trans_amp, rot_amp=rot_amp),
        seed=seed,
        degradations=list(degradations or []),
    )


