"""Heteroscedastic Laplacian NLL with multi-scale average pooling.

Per pixel the loss is e * exp(-l) + l, minimized at l = ln e with value
1 + ln e. The multi-scale variant average-pools both the target error map
and the predicted log-covariance map; a pooled cell is valid only when
every contributing pixel is valid.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def masked_nll(e, log_cov, valid, reduction: str = "mean") -> torch.Tensor:
    """NLL over valid pixels. Sum reduction matches the odometry engine's
    map score; mean keeps magnitudes comparable across resolutions."""
    if e.shape != log_cov.shape or e.shape != valid.shape:
        raise ValueError("error, log-covariance and mask shapes must match")
    per_pixel = e * torch.exp(-log_cov) + log_cov
    picked = per_pixel[valid]
    if picked.numel() == 0:
        return torch.zeros((), dtype=log_cov.dtype, device=log_cov.device)
    if reduction == "sum":
        return picked.sum()
    if reduction == "mean":
        return picked.mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def _pool_pair(values: torch.Tensor, valid: torch.Tensor):
    """One 2x average-pooling step; partial edge blocks average the pixels
    present, and validity requires the whole block to be valid."""
    v = F.avg_pool2d(values, 2, ceil_mode=True, count_include_pad=False)
    m = F.avg_pool2d(valid.to(values.dtype), 2, ceil_mode=True, count_include_pad=False)
    return v, m >= 1.0


def multiscale_nll(e, log_cov, valid, n_scales: int) -> torch.Tensor:
    """Equal-weight mean of per-scale mean NLLs. Scale 0 is full resolution;
    each further scale pools the same predicted map (and its targets) 2x."""
    if n_scales < 1:
        raise ValueError("need at least one scale")
    if e.dim() == 2:
        e, log_cov, valid = e[None, None], log_cov[None, None], valid[None, None]
    total = masked_nll(e, log_cov, valid)
    for _ in range(n_scales - 1):
        e, m_e = _pool_pair(e, valid)
        log_cov, _ = _pool_pair(log_cov, valid)
        valid = m_e
        total = total + masked_nll(e, log_cov, valid)
    return total / n_scales
