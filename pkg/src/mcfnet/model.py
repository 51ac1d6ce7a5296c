"""The composite colorization network and the trainable model bundle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn

from .blocks import FusionModule, PatchDiscriminator
from .cfem import CfemGenerator, ColorFeaturePyramid
from .grm import DecoderTaps, GbGenerator, GrmGenerator
from .texture import laplacian_tensor


def nir_to_hsv_input(x_nir: torch.Tensor) -> torch.Tensor:
    """HSV encoding of a replicated NIR tensor, kept differentiable.

    Replicating a single channel three times gives an achromatic image, whose
    HSV form is exactly (H=0, S=0, V=value); building it directly avoids the
    piecewise hexcone conversion in the autograd path.
    """
    if x_nir.shape[1] != 1:
        raise ValueError(f"expected 1-channel NIR input, got {x_nir.shape[1]}")
    zeros = torch.zeros_like(x_nir)
    return torch.cat([zeros, zeros, x_nir], dim=1)


class ColorizationOutput(NamedTuple):
    y_rgb: torch.Tensor
    y_prime_rgb: torch.Tensor
    y_hsv: torch.Tensor
    y_tex: torch.Tensor
    taps: DecoderTaps
    pyramid: ColorFeaturePyramid | None


class ColorizationNetwork(nn.Module):
    """Full NIR->RGB pipeline: texture branch + color branch + geometry + fusion.

    Ablation flags:
      use_texture=False   feeds zeros in place of the Laplacian texture map;
      use_multiscale=False drops the long y4->y2, y4->y1, y3->y1 skips;
      use_hsv_cfem=False  omits the color branch entirely, disables pyramid
                          injection, and feeds zero HSV guidance to fusion.
    """

    def __init__(self, grm_width: int = 64, cfem_width: int = 64,
                 fusion_width: int = 64, feature_channels: int = 64,
                 spade_hidden: int = 64, use_texture: bool = True,
                 use_multiscale: bool = True, use_hsv_cfem: bool = True):
        super().__init__()
        self.use_texture = use_texture
        self.use_hsv_cfem = use_hsv_cfem
        self.cfem = (CfemGenerator(cfem_width, feature_channels)
                     if use_hsv_cfem else None)
        self.grm = GrmGenerator(grm_width, feature_channels,
                                use_multiscale=use_multiscale,
                                spade_hidden=spade_hidden)
        self.fusion = FusionModule(fusion_width, spade_hidden)

    def forward(self, x_nir: torch.Tensor) -> ColorizationOutput:
        if self.use_texture:
            y_tex = laplacian_tensor(x_nir)
        else:
            y_tex = torch.zeros_like(x_nir)
        if self.cfem is not None:
            y_hsv, pyramid = self.cfem(nir_to_hsv_input(x_nir))
        else:
            y_hsv = torch.zeros(x_nir.shape[0], 3, *x_nir.shape[-2:],
                                dtype=x_nir.dtype, device=x_nir.device)
            pyramid = None
        y_prime, taps = self.grm(x_nir, pyramid)
        y_rgb = self.fusion(y_prime, y_tex, y_hsv)
        return ColorizationOutput(y_rgb, y_prime, y_hsv, y_tex, taps, pyramid)


@dataclass
class ModelBundle:
    """All trainable networks: colorizer C_A, reverse generator, discriminators.

    d_rgb judges color images (real RGB vs colorized NIR), d_nir judges
    single-channel images (real NIR vs reverse-generated).
    """

    colorizer: ColorizationNetwork
    gb: GbGenerator
    d_rgb: PatchDiscriminator
    d_nir: PatchDiscriminator

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        groups = {}
        if self.colorizer.cfem is not None:
            groups["cfem"] = list(self.colorizer.cfem.parameters())
        groups["grm"] = list(self.colorizer.grm.parameters())
        groups["fusion"] = list(self.colorizer.fusion.parameters())
        groups["gb"] = list(self.gb.parameters())
        groups["d_a"] = list(self.d_rgb.parameters())
        groups["d_b"] = list(self.d_nir.parameters())
        return groups

    def group_modules(self) -> dict[str, nn.Module]:
        modules = {}
        if self.colorizer.cfem is not None:
            modules["cfem"] = self.colorizer.cfem
        modules["grm"] = self.colorizer.grm
        modules["fusion"] = self.colorizer.fusion
        modules["gb"] = self.gb
        modules["d_a"] = self.d_rgb
        modules["d_b"] = self.d_nir
        return modules

    def generator_parameters(self) -> list[nn.Parameter]:
        return list(self.colorizer.parameters()) + list(self.gb.parameters())

    def train_mode(self, mode: bool = True) -> None:
        for module in (self.colorizer, self.gb, self.d_rgb, self.d_nir):
            module.train(mode)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Normal(0, std) init for conv weights, zeros for biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
