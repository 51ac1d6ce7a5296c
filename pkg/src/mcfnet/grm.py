"""Geometry reconstruction generator and the reverse RGB->NIR generator.

Both are U-Nets with a 4-stage encoder reaching 1/8 resolution. The forward
(geometry) generator additionally receives SPADE-injected color guidance at
the y4/y3/y1 decoder scales and long multi-scale skips: the deepest decoder
map y4 is bilinearly upscaled x4 into y2's input and x8 into y1's input, and
y3 is upscaled x4 into y1's input. The reverse generator is the plain U-Net
(no SPADE, no long skips).
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ConvBlock, SpadeBlock
from .cfem import ColorFeaturePyramid, check_spatial_divisible


class DecoderTaps(NamedTuple):
    """Decoder feature maps; y_k lives at resolution (H,W) / 2^(k-1)."""

    y1: torch.Tensor
    y2: torch.Tensor
    y3: torch.Tensor
    y4: torch.Tensor


def upsample_bilinear(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class UnetBackbone(nn.Module):
    """U-Net encoder-decoder with optional SPADE sites and long skips.

    guidance_channels=None builds the plain variant (no SPADE modules at
    all). With SPADE sites built, forwarding without a pyramid applies only
    the parameter-free standardization at each site, which coincides with
    zero-modulation SPADE.
    """

    def __init__(self, in_channels: int, out_channels: int, width: int = 64,
                 guidance_channels: int | None = None,
                 use_multiscale: bool = True, spade_hidden: int = 64):
        super().__init__()
        w = width
        self.in_channels = in_channels
        self.use_multiscale = use_multiscale
        self.enc1 = ConvBlock(in_channels, w, stride=1, act="lrelu")   # H
        self.enc2 = ConvBlock(w, 2 * w, stride=2, act="lrelu")         # H/2
        self.enc3 = ConvBlock(2 * w, 4 * w, stride=2, act="lrelu")     # H/4
        self.enc4 = ConvBlock(4 * w, 8 * w, stride=2, act="lrelu")     # H/8

        in3 = 8 * w + 4 * w
        in2 = 4 * w + 2 * w + (8 * w if use_multiscale else 0)
        in1 = 2 * w + w + ((8 * w + 4 * w) if use_multiscale else 0)
        if guidance_channels is not None:
            self.spade4 = SpadeBlock(8 * w, guidance_channels, spade_hidden)
            self.spade3 = SpadeBlock(in3, guidance_channels, spade_hidden)
            self.spade1 = SpadeBlock(in1, guidance_channels, spade_hidden)
        else:
            self.spade4 = self.spade3 = self.spade1 = None
        self.dec4 = ConvBlock(8 * w, 8 * w)   # y4 @ H/8
        self.dec3 = ConvBlock(in3, 4 * w)     # y3 @ H/4
        self.dec2 = ConvBlock(in2, 2 * w)     # y2 @ H/2
        self.dec1 = ConvBlock(in1, w)         # y1 @ H
        self.head = nn.Conv2d(w, out_channels, 1)

    @staticmethod
    def _modulate(spade, features, guidance):
        if spade is None:
            return features
        return spade(features, guidance)

    def forward(self, x: torch.Tensor,
                pyramid: ColorFeaturePyramid | None = None
                ) -> tuple[torch.Tensor, DecoderTaps]:
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels}-channel input, got {x.shape[1]}"
            )
        check_spatial_divisible(x)
        f_full = f_quarter = f_eighth = None
        if pyramid is not None:
            f_full, f_quarter, f_eighth = pyramid

        e1 = self.enc1(x)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        e4 = self.enc4(e3)

        y4 = self.dec4(self._modulate(self.spade4, e4, f_eighth))

        h3 = torch.cat([upsample_bilinear(y4, e3.shape[-2:]), e3], dim=1)
        y3 = self.dec3(self._modulate(self.spade3, h3, f_quarter))

        parts2 = [upsample_bilinear(y3, e2.shape[-2:]), e2]
        if self.use_multiscale:
            parts2.append(upsample_bilinear(y4, e2.shape[-2:]))
        y2 = self.dec2(torch.cat(parts2, dim=1))

        parts1 = [upsample_bilinear(y2, e1.shape[-2:]), e1]
        if self.use_multiscale:
            parts1.append(upsample_bilinear(y4, e1.shape[-2:]))
            parts1.append(upsample_bilinear(y3, e1.shape[-2:]))
        h1 = torch.cat(parts1, dim=1)
        y1 = self.dec1(self._modulate(self.spade1, h1, f_full))

        out = torch.sigmoid(self.head(y1))
        return out, DecoderTaps(y1, y2, y3, y4)


class GrmGenerator(UnetBackbone):
    """NIR -> coarse RGB U-Net with SPADE-injected color guidance."""

    def __init__(self, width: int = 64, feature_channels: int = 64,
                 use_multiscale: bool = True, spade_hidden: int = 64):
        super().__init__(1, 3, width, guidance_channels=feature_channels,
                         use_multiscale=use_multiscale, spade_hidden=spade_hidden)
        self.feature_channels = feature_channels

    def forward(self, x_nir: torch.Tensor,
                pyramid: ColorFeaturePyramid | None
                ) -> tuple[torch.Tensor, DecoderTaps]:
        if pyramid is not None:
            self._check_pyramid(x_nir, pyramid)
        return super().forward(x_nir, pyramid)

    def _check_pyramid(self, x, pyramid):
        h, w = x.shape[-2:]
        expected = {"f_full": (h, w), "f_quarter": (h // 4, w // 4),
                    "f_eighth": (h // 8, w // 8)}
        for name, size in expected.items():
            level = getattr(pyramid, name)
            if tuple(level.shape[-2:]) != size:
                raise ValueError(
                    f"pyramid level {name} is {tuple(level.shape[-2:])}, "
                    f"expected {size} for input {h}x{w}"
                )


class GbGenerator(UnetBackbone):
    """RGB -> NIR reverse generator: plain U-Net, no guidance."""

    def __init__(self, width: int = 64):
        super().__init__(3, 1, width, guidance_channels=None,
                         use_multiscale=False)

    def forward(self, x_rgb: torch.Tensor) -> torch.Tensor:
        out, _ = super().forward(x_rgb)
        return out
