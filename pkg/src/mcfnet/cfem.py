"""HSV color feature embedding generator.

Maps the HSV-encoded, channel-replicated NIR input to a predicted HSV image
plus color feature maps at full, quarter, and eighth resolution in a single
forward pass. DCGAN-style strided-conv encoder with a mirrored
transposed-conv decoder; the first encoder stage keeps full resolution so
any input divisible by 8 is accepted.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from .blocks import ConvBlock, UpBlock


class ColorFeaturePyramid(NamedTuple):
    """Color feature maps at three spatial scales: H, H/4, H/8."""

    f_full: torch.Tensor
    f_quarter: torch.Tensor
    f_eighth: torch.Tensor


class CfemOutput(NamedTuple):
    y_hsv: torch.Tensor
    pyramid: ColorFeaturePyramid


def check_spatial_divisible(x: torch.Tensor, divisor: int = 8) -> None:
    h, w = x.shape[-2:]
    if h % divisor or w % divisor:
        raise ValueError(f"spatial size {h}x{w} must be divisible by {divisor}")


class CfemGenerator(nn.Module):
    """Generator predicting an HSV image and its color feature pyramid.

    Decoder activations at the full, quarter, and eighth scales each pass
    through a 1x1 projection to `feature_channels` channels, giving the
    downstream SPADE consumers fixed-width guidance regardless of internal
    widths. The HSV head is a sigmoid so outputs stay in [0,1] for any
    parameter values.
    """

    def __init__(self, width: int = 64, feature_channels: int = 64):
        super().__init__()
        w = width
        self.feature_channels = feature_channels
        self.enc1 = ConvBlock(3, w, stride=1, act="lrelu")        # H
        self.enc2 = ConvBlock(w, 2 * w, stride=2, act="lrelu")    # H/2
        self.enc3 = ConvBlock(2 * w, 4 * w, stride=2, act="lrelu")  # H/4
        self.enc4 = ConvBlock(4 * w, 8 * w, stride=2, act="lrelu")  # H/8
        self.dec4 = ConvBlock(8 * w, 8 * w)                       # H/8
        self.up3 = UpBlock(8 * w, 4 * w)
        self.dec3 = ConvBlock(4 * w, 4 * w)                       # H/4
        self.up2 = UpBlock(4 * w, 2 * w)
        self.dec2 = ConvBlock(2 * w, 2 * w)                       # H/2
        self.up1 = UpBlock(2 * w, w)
        self.dec1 = ConvBlock(w, w)                               # H
        self.head = nn.Conv2d(w, 3, 3, padding=1)
        self.proj_eighth = nn.Conv2d(8 * w, feature_channels, 1)
        self.proj_quarter = nn.Conv2d(4 * w, feature_channels, 1)
        self.proj_full = nn.Conv2d(w, feature_channels, 1)

    def forward(self, x_hsv: torch.Tensor) -> CfemOutput:
        if x_hsv.shape[1] != 3:
            raise ValueError(f"expected 3-channel HSV input, got {x_hsv.shape[1]}")
        check_spatial_divisible(x_hsv)
        e = self.enc4(self.enc3(self.enc2(self.enc1(x_hsv))))
        d4 = self.dec4(e)
        d3 = self.dec3(self.up3(d4))
        d2 = self.dec2(self.up2(d3))
        d1 = self.dec1(self.up1(d2))
        y_hsv = torch.sigmoid(self.head(d1))
        pyramid = ColorFeaturePyramid(
            f_full=self.proj_full(d1),
            f_quarter=self.proj_quarter(d3),
            f_eighth=self.proj_eighth(d4),
        )
        return CfemOutput(y_hsv, pyramid)
