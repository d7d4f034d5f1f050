"""Quality-aware support-pixel selection on a new keyframe.

Candidates come from a grid of non-overlapping 4x4 cells (each cell's
max-gradient pixel with valid depth), are gated by a per-block adaptive
threshold on the directional score, modulated by the photometric quality
prior, and kept top-K by modulated score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

# Selection geometry/threshold defaults.
CELL = 4  # candidate cell size (one candidate per cell)
BLOCK = 32  # adaptive-threshold block size
GRAD_OFFSET = 7.0 / 255.0  # additive threshold offset, also the floor
BORDER = 2  # skip pixels where central differences are undefined
DEPTH_REL_TOL = 0.1  # max relative depth span in a 3x3 neighborhood


@dataclass
class SupportPixel:
    x: int
    y: int
    depth: float
    score: float  # raw directional score s
    modulated: float  # s * Q_photo
    grad: tuple  # (d_x, d_y) central differences on the keyframe


def image_gradients(image: np.ndarray):
    """Central-difference gradients; border ring left at zero."""
    gx = np.zeros_like(image)
    gy = np.zeros_like(image)
    gx[:, 1:-1] = (image[:, 2:] - image[:, :-2]) / 2.0
    gy[1:-1, :] = (image[2:, :] - image[:-2, :]) / 2.0
    return gx, gy


def gradient_score(image: np.ndarray, p, direction) -> float:
    """Absolute directional derivative |grad I(p) . d| at an interior pixel."""
    x, y = int(p[0]), int(p[1])
    h, w = image.shape
    if not (1 <= x < w - 1 and 1 <= y < h - 1):
        raise InvalidArgumentError("gradient undefined on the border")
    dx = (image[y, x + 1] - image[y, x - 1]) / 2.0
    dy = (image[y + 1, x] - image[y - 1, x]) / 2.0
    return abs(dx * direction[0] + dy * direction[1])


def adaptive_threshold(
    image: np.ndarray,
    block: int = BLOCK,
    g_off: float = GRAD_OFFSET,
    theta_min: float = GRAD_OFFSET,
) -> np.ndarray:
    """Per-block threshold: median gradient magnitude + g_off, floored."""
    gx, gy = image_gradients(image)
    mag = np.hypot(gx, gy)
    h, w = image.shape
    nby, nbx = (h + block - 1) // block, (w + block - 1) // block
    theta = np.zeros((nby, nbx))
    for by in range(nby):
        for bx in range(nbx):
            patch = mag[by * block : (by + 1) * block, bx * block : (bx + 1) * block]
            theta[by, bx] = max(float(np.median(patch)) + g_off, theta_min)
    return theta


def depth_consistent_mask(depth: np.ndarray, rel_tol: float = DEPTH_REL_TOL) -> np.ndarray:
    """Pixels whose full 3x3 neighborhood has valid depth within a relative
    span of rel_tol. Depth-discontinuous pixels make poor support: their
    bilinear footprint straddles two surfaces, so the photometric residual is
    biased even at the true pose."""
    valid = np.isfinite(depth) & (depth > 0)
    h, w = depth.shape
    ok = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return ok
    d = np.where(valid, depth, np.nan)
    stack = np.stack(
        [d[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx] for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    )
    span = np.max(stack, axis=0) - np.min(stack, axis=0)
    center = d[1:-1, 1:-1]
    with np.errstate(invalid="ignore"):
        ok[1:-1, 1:-1] = np.isfinite(span) & (span <= rel_tol * center)
    return ok


def select_support(
    image: np.ndarray,
    depth: np.ndarray,
    quality_photo: np.ndarray,
    budget: int,
    seed: int,
    block: int = BLOCK,
    g_off: float = GRAD_OFFSET,
    theta_min: float = GRAD_OFFSET,
) -> list:
    """Top-K support pixels by quality-modulated directional gradient score.

    Deterministic given (image, depth, quality, budget, seed): one random
    unit direction per candidate from a seeded generator, ties broken by
    row-major pixel order.
    """
    if budget < 1:
        raise InvalidArgumentError("budget must be >= 1")
    if quality_photo.shape != image.shape:
        raise InvalidArgumentError("quality map must match the image")
    h, w = image.shape
    gx, gy = image_gradients(image)
    mag = np.hypot(gx, gy)
    usable = depth_consistent_mask(depth)
    usable[:BORDER, :] = False
    usable[-BORDER:, :] = False
    usable[:, :BORDER] = False
    usable[:, -BORDER:] = False
    theta = adaptive_threshold(image, block, g_off, theta_min)

    rng = np.random.Generator(np.random.PCG64(seed))
    candidates = []
    # Row-major cell order fixes the direction draw per candidate.
    for cy in range(0, h, CELL):
        for cx in range(0, w, CELL):
            cell_mag = np.where(
                usable[cy : cy + CELL, cx : cx + CELL],
                mag[cy : cy + CELL, cx : cx + CELL],
                -1.0,
            )
            flat = int(np.argmax(cell_mag))
            best = cell_mag.reshape(-1)[flat]
            if best < 0:
                continue
            oy, ox = divmod(flat, cell_mag.shape[1])
            x, y = cx + ox, cy + oy
            angle = rng.uniform(0.0, 2.0 * np.pi)
            d = (np.cos(angle), np.sin(angle))
            s = abs(gx[y, x] * d[0] + gy[y, x] * d[1])
            if s > theta[y // block, x // block]:
                candidates.append(
                    SupportPixel(
                        x=x, y=y, depth=float(depth[y, x]), score=float(s),
                        modulated=float(s * quality_photo[y, x]),
                        grad=(float(gx[y, x]), float(gy[y, x])),
                    )
                )
    candidates.sort(key=lambda sp: (-sp.modulated, sp.y * w + sp.x))
    return candidates[:budget]
