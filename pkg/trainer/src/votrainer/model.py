"""Dual-branch uncertainty network.

Two convolutional encoders (image and depth) downsample to 1/2, 1/4, 1/8
resolution. At 1/8 a local correlation volume with search radius 4 matches
the two frames' image features, yielding (2*4+1)^2 = 81 channels. Two
decoder heads upsample back to full resolution through exactly three 2x
stages and emit single-channel log-covariance maps with no final
activation:

  - the photometric head sees image features of both frames only;
  - the geometric head sees the correlation descriptor plus image and depth
    features of both frames.

The asymmetry is deliberate: depth noise must not leak into the
photometric uncertainty estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class NetworkSpec:
    image_widths: tuple = (16, 32, 48)  # at 1/2, 1/4, 1/8
    depth_widths: tuple = (8, 16, 24)
    corr_radius: int = 4
    decoder_width: int = 32
    decoder_stage_widths: tuple = (24, 16, 12)

    def __post_init__(self):
        if len(self.image_widths) != 3 or len(self.depth_widths) != 3:
            raise ValueError("encoders must declare widths for 1/2, 1/4, 1/8")
        if len(self.decoder_stage_widths) != 3:
            raise ValueError("decoder performs exactly three upsampling stages")
        if self.corr_radius < 1:
            raise ValueError("correlation radius must be positive")

    @property
    def corr_channels(self) -> int:
        return (2 * self.corr_radius + 1) ** 2

    def to_dict(self) -> dict:
        return {
            "image_widths": list(self.image_widths),
            "depth_widths": list(self.depth_widths),
            "corr_radius": self.corr_radius,
            "decoder_width": self.decoder_width,
            "decoder_stage_widths": list(self.decoder_stage_widths),
        }

    @staticmethod
    def from_dict(d: dict) -> "NetworkSpec":
        return NetworkSpec(
            image_widths=tuple(d["image_widths"]),
            depth_widths=tuple(d["depth_widths"]),
            corr_radius=int(d["corr_radius"]),
            decoder_width=int(d["decoder_width"]),
            decoder_stage_widths=tuple(d["decoder_stage_widths"]),
        )


def _stage(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class Encoder(nn.Module):
    def __init__(self, widths, in_channels: int = 1):
        super().__init__()
        chans = [in_channels] + list(widths)
        self.stages = nn.ModuleList(
            _stage(chans[k], chans[k + 1]) for k in range(3)
        )

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats  # at 1/2, 1/4, 1/8


def local_correlation(feat_a: torch.Tensor, feat_b: torch.Tensor, radius: int):
    """Dense local cost volume: channel (dy, dx) holds the normalized dot
    product between feat_a at p and feat_b at p + (dx, dy). Out-of-bounds
    offsets contribute zero."""
    b, c, h, w = feat_a.shape
    padded = F.pad(feat_b, (radius, radius, radius, radius))
    out = []
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            shifted = padded[:, :, dy : dy + h, dx : dx + w]
            out.append((feat_a * shifted).sum(dim=1, keepdim=True))
    return torch.cat(out, dim=1) / float(c) ** 0.5


class Head(nn.Module):
    """1/8-scale features -> full-resolution single-channel map via exactly
    three 2x upsampling stages; the final conv has no activation.

    skip_chs lists the raw channel counts of encoder skip features injected
    after the first and second upsampling stages (1/4 and 1/2 resolution);
    each skip is first projected to a small fixed width."""

    SKIP_WIDTH = 8

    def __init__(self, in_ch: int, spec: NetworkSpec, skip_chs=(0, 0)):
        super().__init__()
        self.reduce = nn.Sequential(
            nn.Conv2d(in_ch, spec.decoder_width, 1), nn.ReLU(inplace=True)
        )
        self.skip_projs = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, self.SKIP_WIDTH, 1), nn.ReLU(inplace=True))
            if c
            else None
            for c in skip_chs
        )
        blocks = []
        prev = spec.decoder_width
        for k, width in enumerate(spec.decoder_stage_widths):
            extra = self.SKIP_WIDTH if k < len(skip_chs) and skip_chs[k] else 0
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(prev + extra, width, 3, padding=1),
                    nn.ReLU(inplace=True),
                )
            )
            prev = width
        self.stages = nn.ModuleList(blocks)
        self.out = nn.Conv2d(prev, 1, 3, padding=1)

    def forward(self, x, skips=(None, None)):
        x = self.reduce(x)
        for k, stage in enumerate(self.stages):
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            if k < len(self.skip_projs) and self.skip_projs[k] is not None:
                x = torch.cat([x, self.skip_projs[k](skips[k])], dim=1)
            x = stage(x)
        return self.out(x)


class UncertaintyNet(nn.Module):
    def __init__(self, spec: NetworkSpec = NetworkSpec()):
        super().__init__()
        self.spec = spec
        # Each image-encoder pass sees its own frame plus the absolute frame
        # difference. The difference is the one cue for independent motion
        # that survives neither in single-frame appearance nor in strided
        # features; it is derived from the images alone, so the photometric
        # head stays depth-blind.
        self.image_encoder = Encoder(spec.image_widths, in_channels=2)
        self.depth_encoder = Encoder(spec.depth_widths)
        img_c = spec.image_widths[-1]
        dep_c = spec.depth_widths[-1]
        img_skips = (2 * spec.image_widths[1], 2 * spec.image_widths[0])
        both_skips = (
            img_skips[0] + 2 * spec.depth_widths[1],
            img_skips[1] + 2 * spec.depth_widths[0],
        )
        self.photo_head = Head(2 * img_c, spec, skip_chs=img_skips)
        self.geo_head = Head(
            spec.corr_channels + 2 * img_c + 2 * dep_c, spec, skip_chs=both_skips
        )

    @staticmethod
    def _as_batch(x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 2:
            return x[None, None]
        if x.dim() == 3:
            return x[:, None]
        return x

    def forward(self, img_j, img_i, depth_j, depth_i):
        img_j, img_i = self._as_batch(img_j), self._as_batch(img_i)
        depth_j, depth_i = self._as_batch(depth_j), self._as_batch(depth_i)
        h, w = img_j.shape[-2:]
        pad_h = (-h) % 8
        pad_w = (-w) % 8
        if pad_h or pad_w:
            pad = (0, pad_w, 0, pad_h)
            img_j = F.pad(img_j, pad, mode="replicate")
            img_i = F.pad(img_i, pad, mode="replicate")
            depth_j = F.pad(depth_j, pad, mode="replicate")
            depth_i = F.pad(depth_i, pad, mode="replicate")
        diff = (img_j - img_i).abs()
        fi_j = self.image_encoder(torch.cat([img_j, diff], dim=1))
        fi_i = self.image_encoder(torch.cat([img_i, diff], dim=1))
        fd_j = self.depth_encoder(depth_j)
        fd_i = self.depth_encoder(depth_i)
        corr = local_correlation(fi_i[-1], fi_j[-1], self.spec.corr_radius)
        img_skips = (
            torch.cat([fi_j[1], fi_i[1]], dim=1),  # 1/4
            torch.cat([fi_j[0], fi_i[0]], dim=1),  # 1/2
        )
        both_skips = (
            torch.cat([img_skips[0], fd_j[1], fd_i[1]], dim=1),
            torch.cat([img_skips[1], fd_j[0], fd_i[0]], dim=1),
        )
        log_photo = self.photo_head(
            torch.cat([fi_j[-1], fi_i[-1]], dim=1), skips=img_skips
        )
        log_geo = self.geo_head(
            torch.cat([corr, fi_j[-1], fi_i[-1], fd_j[-1], fd_i[-1]], dim=1),
            skips=both_skips,
        )
        return log_photo[..., :h, :w], log_geo[..., :h, :w]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
