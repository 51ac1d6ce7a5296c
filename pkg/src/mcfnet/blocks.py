"""Shared neural building blocks: SPADE modulation, branch fusion, patch
discriminators, and the conv blocks the generators are assembled from."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def spatial_standardize(x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Parameter-free per-channel standardization over spatial positions.

    (x - mean) / sqrt(var + eps) with mean/var taken per sample per channel;
    eps guards the constant-feature singularity.
    """
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps)


class SpadeBlock(nn.Module):
    """Spatially-adaptive modulation of a feature map by a guidance map.

    out = standardize(features) * (1 + gamma(guidance)) + beta(guidance),
    where gamma/beta are convolutions over a shared guidance embedding. The
    guidance is bilinearly resized to the feature map's spatial size when
    needed. Calling with guidance=None applies the parameter-free
    standardization only (injection disabled), which equals the output under
    all-zero gamma/beta heads.
    """

    def __init__(self, feature_channels: int, guidance_channels: int,
                 hidden_channels: int = 64, eps: float = 1e-5):
        super().__init__()
        self.feature_channels = feature_channels
        self.guidance_channels = guidance_channels
        self.eps = eps
        self.shared = nn.Conv2d(guidance_channels, hidden_channels, 3, padding=1)
        self.gamma = nn.Conv2d(hidden_channels, feature_channels, 3, padding=1)
        self.beta = nn.Conv2d(hidden_channels, feature_channels, 3, padding=1)

    def forward(self, features: torch.Tensor,
                guidance: torch.Tensor | None) -> torch.Tensor:
        if features.shape[1] != self.feature_channels:
            raise ValueError(
                f"feature map has {features.shape[1]} channels, "
                f"modulation heads emit {self.feature_channels}"
            )
        normalized = spatial_standardize(features, self.eps)
        if guidance is None:
            return normalized
        if guidance.shape[1] != self.guidance_channels:
            raise ValueError(
                f"guidance has {guidance.shape[1]} channels, expected "
                f"{self.guidance_channels}"
            )
        if guidance.shape[-2:] != features.shape[-2:]:
            guidance = F.interpolate(guidance, size=features.shape[-2:],
                                     mode="bilinear", align_corners=False)
        embedded = F.relu(self.shared(guidance))
        return normalized * (1.0 + self.gamma(embedded)) + self.beta(embedded)


class ConvBlock(nn.Module):
    """Conv + instance norm + activation. stride=2 downsamples (4x4 kernel),
    stride=1 keeps resolution (3x3 kernel)."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1,
                 act: str = "relu", norm: bool = True):
        super().__init__()
        if stride == 1:
            self.conv = nn.Conv2d(in_channels, out_channels, 3, 1, 1)
        elif stride == 2:
            self.conv = nn.Conv2d(in_channels, out_channels, 4, 2, 1)
        else:
            raise ValueError(f"unsupported stride {stride}")
        self.norm = nn.InstanceNorm2d(out_channels) if norm else None
        self.act = nn.LeakyReLU(0.2) if act == "lrelu" else nn.ReLU()

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        return self.act(x)


class UpBlock(nn.Module):
    """Transposed-conv x2 upsampling + instance norm + ReLU."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.ConvTranspose2d(in_channels, out_channels, 4, 2, 1)
        self.norm = nn.InstanceNorm2d(out_channels)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class FusionModule(nn.Module):
    """Fuses the coarse color image with the texture map under HSV guidance.

    Concatenates the coarse 3-channel image with the 1-channel texture map,
    refines through two conv blocks each preceded by SPADE modulation guided
    by the predicted HSV image, and squashes to [0,1] with a sigmoid head.
    """

    def __init__(self, width: int = 64, spade_hidden: int = 64):
        super().__init__()
        self.spade1 = SpadeBlock(4, 3, spade_hidden)
        self.conv1 = nn.Conv2d(4, width, 3, padding=1)
        self.spade2 = SpadeBlock(width, 3, spade_hidden)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.head = nn.Conv2d(width, 3, 3, padding=1)

    def forward(self, coarse_rgb: torch.Tensor, texture: torch.Tensor,
                guidance_hsv: torch.Tensor) -> torch.Tensor:
        if not (coarse_rgb.shape[-2:] == texture.shape[-2:]
                == guidance_hsv.shape[-2:]):
            raise ValueError(
                "fusion inputs must share spatial size, got "
                f"{tuple(coarse_rgb.shape[-2:])}, {tuple(texture.shape[-2:])}, "
                f"{tuple(guidance_hsv.shape[-2:])}"
            )
        x = torch.cat([coarse_rgb, texture], dim=1)
        x = F.relu(self.conv1(self.spade1(x, guidance_hsv)))
        x = F.relu(self.conv2(self.spade2(x, guidance_hsv)))
        return torch.sigmoid(self.head(x))


class PatchDiscriminator(nn.Module):
    """Patch discriminator with a 70x70 receptive field.

    Four strided/unit-stride conv layers then a sigmoid head, emitting a grid
    of real/fake probabilities (one per receptive-field patch); 256x256 input
    gives a 30x30 map at the default configuration. Inputs must be at least
    24x24 so the normalized layers keep more than one spatial element.
    """

    def __init__(self, in_channels: int, width: int = 64):
        super().__init__()
        w = width
        self.in_channels = in_channels
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, w, 4, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(w, 2 * w, 4, 2, 1), nn.InstanceNorm2d(2 * w), nn.LeakyReLU(0.2),
            nn.Conv2d(2 * w, 4 * w, 4, 2, 1), nn.InstanceNorm2d(4 * w), nn.LeakyReLU(0.2),
            nn.Conv2d(4 * w, 8 * w, 4, 1, 1), nn.InstanceNorm2d(8 * w), nn.LeakyReLU(0.2),
            nn.Conv2d(8 * w, 1, 4, 1, 1),
        )

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        if img.shape[1] != self.in_channels:
            raise ValueError(
                f"discriminator expects {self.in_channels}-channel input, "
                f"got {img.shape[1]}"
            )
        return torch.sigmoid(self.net(img))
