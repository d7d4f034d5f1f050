"""Coarse-to-fine direct alignment of a frame against a host keyframe.

The estimated pose maps host-keyframe camera coordinates into the incoming
frame's camera coordinates. Decoupled photometric-geometric weighting is
applied only at the finest pyramid level; coarser levels run with unit
weights (Huber only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, TrackingDegenerateError
from .frames import RgbdFrame
from .geometry import Intrinsics, Se3Pose, Z_MIN, build_pyramid, se3_exp
from .quality import QualityPrior, WeightMaps


@dataclass
class TrackingConfig:
    levels: int = 4
    max_iterations: int = 20
    convergence_delta: float = 1e-6
    huber_delta: float = 9.0 / 255.0
    min_valid_fraction: float = 0.2
    condition_limit: float = 1e12


@dataclass
class Keyframe:
    frame: RgbdFrame
    world_pose: Se3Pose
    prior: QualityPrior
    support: list  # list[SupportPixel]
    index: int
    pyramid: list = field(default_factory=list)

    def ensure_pyramid(self, levels: int):
        if len(self.pyramid) < levels:
            self.pyramid = build_pyramid(self.frame.intensity, levels)


@dataclass
class Linearization:
    """Per-support-pixel residuals and Jacobian rows at one pyramid level."""

    residual: np.ndarray  # (N,)
    jacobian: np.ndarray  # (N, 6), columns [t | omega]
    valid: np.ndarray  # (N,) bool
    warped: np.ndarray  # (N, 2) warped pixel locations
    inv_depth: np.ndarray  # (N,) warped inverse depth


@dataclass
class NormalEquations:
    h: np.ndarray  # (6, 6)
    b: np.ndarray  # (6,)
    energy: float  # total weighted Huber energy
    mean_energy: float
    valid_count: int


def _support_arrays(support):
    xs = np.array([sp.x for sp in support], dtype=np.float64)
    ys = np.array([sp.y for sp in support], dtype=np.float64)
    ds = np.array([sp.depth for sp in support], dtype=np.float64)
    return xs, ys, ds


def linearize_support(
    host_image: np.ndarray,
    target_image: np.ndarray,
    k_level: Intrinsics,
    xs_level: np.ndarray,
    ys_level: np.ndarray,
    depths: np.ndarray,
    pose: Se3Pose,
) -> Linearization:
    """Vectorized linearization of the photometric residual at one level.

    Residual: r = I_host(p) - I_target(project(pose * backproject(p, d))),
    with the Jacobian taken for the left-multiplied update exp(dxi) * pose.
    Host values are sampled bilinearly (support coordinates are fractional
    on coarse levels). Out-of-bounds or behind-camera pixels get valid=False.
    """
    n = xs_level.shape[0]
    h, w = target_image.shape
    fx, fy, cx, cy = k_level.fx, k_level.fy, k_level.cx, k_level.cy

    px = np.stack(
        [
            (xs_level - cx) / fx * depths,
            (ys_level - cy) / fy * depths,
            depths,
        ],
        axis=-1,
    )
    moved = pose.apply(px)
    z = moved[:, 2]
    front = z > Z_MIN
    zs = np.where(front, z, 1.0)
    u = fx * moved[:, 0] / zs + cx
    v = fy * moved[:, 1] / zs + cy
    inb = front & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    hh0, hw0 = host_image.shape
    inb &= (
        (xs_level >= 0)
        & (xs_level <= hw0 - 1)
        & (ys_level >= 0)
        & (ys_level <= hh0 - 1)
    )

    residual = np.zeros(n)
    jac = np.zeros((n, 6))
    warped = np.stack([u, v], axis=-1)
    inv_depth = np.where(front, 1.0 / zs, 0.0)

    if np.any(inb):
        ui, vi = u[inb], v[inb]
        x0 = np.minimum(np.floor(ui).astype(np.intp), w - 2)
        y0 = np.minimum(np.floor(vi).astype(np.intp), h - 2)
        fxs = ui - x0
        fys = vi - y0
        i00 = target_image[y0, x0]
        i01 = target_image[y0, x0 + 1]
        i10 = target_image[y0 + 1, x0]
        i11 = target_image[y0 + 1, x0 + 1]
        top = i00 * (1 - fxs) + i01 * fxs
        bot = i10 * (1 - fxs) + i11 * fxs
        val = top * (1 - fys) + bot * fys
        gx = (i01 - i00) * (1 - fys) + (i11 - i10) * fys
        gy = bot - top

        hx = xs_level[inb]
        hy = ys_level[inb]
        hw = host_image.shape[1]
        hh = host_image.shape[0]
        hx0 = np.minimum(np.floor(hx).astype(np.intp), hw - 2)
        hy0 = np.minimum(np.floor(hy).astype(np.intp), hh - 2)
        hfx = hx - hx0
        hfy = hy - hy0
        host_val = (
            host_image[hy0, hx0] * (1 - hfx) * (1 - hfy)
            + host_image[hy0, hx0 + 1] * hfx * (1 - hfy)
            + host_image[hy0 + 1, hx0] * (1 - hfx) * hfy
            + host_image[hy0 + 1, hx0 + 1] * hfx * hfy
        )
        residual[inb] = host_val - val

        zb = z[inb]
        xn = moved[inb, 0] / zb
        yn = moved[inb, 1] / zb
        a = gx * fx / zb
        bb = gy * fy / zb
        # dr/dP' = -(a, b, -(a*x + b*y)); translational block is this times 1.
        q0 = -a
        q1 = -bb
        q2 = a * xn + bb * yn
        jac[inb, 0] = q0
        jac[inb, 1] = q1
        jac[inb, 2] = q2
        # Rotational block: dr/dP' @ (-[P']x).
        px_, py_, pz_ = moved[inb, 0], moved[inb, 1], moved[inb, 2]
        jac[inb, 3] = -q1 * pz_ + q2 * py_
        jac[inb, 4] = q0 * pz_ - q2 * px_
        jac[inb, 5] = -q0 * py_ + q1 * px_

    return Linearization(residual, jac, inb, warped, inv_depth)


def huber_weights(residual: np.ndarray, delta: float) -> np.ndarray:
    absr = np.abs(residual)
    return np.where(absr <= delta, 1.0, delta / np.maximum(absr, 1e-300))


def huber_energy(residual: np.ndarray, delta: float) -> np.ndarray:
    absr = np.abs(residual)
    return np.where(absr <= delta, 0.5 * residual**2, delta * (absr - 0.5 * delta))


def accumulate_weighted(
    lin: Linearization,
    w_photo: np.ndarray,
    w_geo: np.ndarray,
    apply_decoupled: bool,
    cfg: TrackingConfig,
) -> NormalEquations:
    """Build the weighted Gauss-Newton normal equations.

    Weighted rows: J~ = [wp*wg*J_tr | wp*J_rot], r~ = wp*r, with a Huber
    weight on r~. With apply_decoupled=False both weights are exactly 1.
    Summation is in fixed support-pixel order.
    """
    n = lin.residual.shape[0]
    valid = lin.valid
    count = int(valid.sum())
    if n == 0 or count < cfg.min_valid_fraction * n:
        raise TrackingDegenerateError(
            f"only {count}/{n} support pixels valid (min fraction {cfg.min_valid_fraction})"
        )
    if apply_decoupled:
        wp = w_photo
        wg = w_geo
    else:
        wp = np.ones(n)
        wg = np.ones(n)
    jw = np.empty_like(lin.jacobian)
    jw[:, :3] = lin.jacobian[:, :3] * (wp * wg)[:, None]
    jw[:, 3:] = lin.jacobian[:, 3:] * wp[:, None]
    rw = wp * lin.residual

    jv = jw[valid]
    rv = rw[valid]
    hub = huber_weights(rv, cfg.huber_delta)
    jh = jv * hub[:, None]
    h = jh.T @ jv
    b = jh.T @ rv
    energy = float(huber_energy(rv, cfg.huber_delta).sum())
    return NormalEquations(h, b, energy, energy / count, count)


@dataclass
class LevelReport:
    level: int
    iterations: int = 0
    energy: float = float("nan")
    valid_fraction: float = 0.0
    converged: bool = False


def solve_level(
    host_image: np.ndarray,
    target_image: np.ndarray,
    k_level: Intrinsics,
    xs_level: np.ndarray,
    ys_level: np.ndarray,
    depths: np.ndarray,
    init_pose: Se3Pose,
    w_photo: np.ndarray,
    w_geo: np.ndarray,
    apply_decoupled: bool,
    cfg: TrackingConfig,
    level: int,
):
    """Gauss-Newton at one pyramid level with step rejection on energy
    increase (one half-step retry, then stop)."""

    def lin_at(pose):
        return linearize_support(
            host_image, target_image, k_level, xs_level, ys_level, depths, pose
        )

    pose = init_pose
    report = LevelReport(level=level)
    lin = lin_at(pose)
    neq = accumulate_weighted(lin, w_photo, w_geo, apply_decoupled, cfg)
    for it in range(cfg.max_iterations):
        report.iterations = it + 1
        if np.linalg.cond(neq.h) > cfg.condition_limit:
            raise DegenerateGeometryError(
                f"normal equations ill-conditioned at level {level}"
            )
        delta = np.linalg.solve(neq.h, -neq.b)
        accepted = False
        step = delta
        for _attempt in range(6):
            candidate = se3_exp(step).compose(pose)
            try:
                lin_c = lin_at(candidate)
                neq_c = accumulate_weighted(lin_c, w_photo, w_geo, apply_decoupled, cfg)
            except TrackingDegenerateError:
                step = step / 2.0
                continue
            if neq_c.mean_energy <= neq.mean_energy:
                pose, lin, neq = candidate, lin_c, neq_c
                accepted = True
                break
            step = step / 2.0
        if not accepted:
            break
        if np.linalg.norm(step) < cfg.convergence_delta:
            report.converged = True
            break
    report.energy = neq.mean_energy
    report.valid_fraction = neq.valid_count / max(len(depths), 1)
    return pose, report


@dataclass
class TrackingReport:
    levels: list = field(default_factory=list)
    degenerate: bool = False
    message: str = ""

    @property
    def final_energy(self):
        return self.levels[-1].energy if self.levels else float("nan")

    @property
    def final_valid_fraction(self):
        return self.levels[-1].valid_fraction if self.levels else 0.0


def track_frame(
    keyframe: Keyframe,
    frame: RgbdFrame,
    init_pose: Se3Pose,
    cfg: TrackingConfig,
    weights: WeightMaps = None,
    apply_decoupled: bool = True,
):
    """Coarse-to-fine alignment; returns (pose, TrackingReport).

    `weights` are read at the support pixels' full-resolution coordinates;
    decoupled weighting is active only at level 0 and only when
    apply_decoupled is True.
    """
    keyframe.ensure_pyramid(cfg.levels)
    target_pyr = build_pyramid(frame.intensity, cfg.levels)
    xs0, ys0, depths = _support_arrays(keyframe.support)
    n = xs0.shape[0]
    if n == 0:
        raise TrackingDegenerateError("keyframe has no support pixels")

    if weights is not None:
        xi = xs0.astype(np.intp)
        yi = ys0.astype(np.intp)
        wp = weights.w_photo[yi, xi]
        wg = weights.w_geo[yi, xi]
    else:
        wp = np.ones(n)
        wg = np.ones(n)

    pose = init_pose
    report = TrackingReport()
    k0 = keyframe.frame.intrinsics
    for level in range(cfg.levels - 1, -1, -1):
        scale = 2**level
        # Continuous level coordinates preserve the full-resolution ray
        # exactly under the level intrinsics.
        xs_l = (xs0 + 0.5) / scale - 0.5
        ys_l = (ys0 + 0.5) / scale - 0.5
        decoupled_here = apply_decoupled and level == 0
        pose, lrep = solve_level(
            keyframe.pyramid[level],
            target_pyr[level],
            k0.at_level(level),
            xs_l,
            ys_l,
            depths,
            pose,
            wp,
            wg,
            decoupled_here,
            cfg,
            level,
        )
        report.levels.append(lrep)
    return pose, report
