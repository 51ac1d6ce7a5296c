"""High-frequency extraction: the texture branch and the edge-loss extractors.

One fixed operator serves both roles: the 4-neighbor Laplacian
[[0,1,0],[1,-4,1],[0,1,0]] applied per channel with replicate padding at the
borders. The edge extractors for 3-channel and 1-channel images are this same
operator, so the edge objective is a deterministic, testable quantity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .colorspace import ImagePlane

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float32)


@dataclass(frozen=True)
class TextureMap:
    """Signed per-channel Laplacian responses, same spatial size as the source."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"texture map must be H x W x C, got {self.data.shape}")


def laplacian_tensor(x: torch.Tensor) -> torch.Tensor:
    """4-neighbor Laplacian of a (N,C,H,W) tensor with replicate padding.

    Differentiable; output is not clipped. Neighbor sums are paired
    ((up+down)+(left+right)) - 4*center so a constant input maps to exact zeros.
    """
    if x.ndim != 4:
        raise ValueError(f"expected a (N,C,H,W) tensor, got shape {tuple(x.shape)}")
    if x.shape[-2] < 3 or x.shape[-1] < 3:
        raise ValueError(f"image must be at least 3x3, got {tuple(x.shape[-2:])}")
    p = F.pad(x, (1, 1, 1, 1), mode="replicate")
    up = p[..., :-2, 1:-1]
    down = p[..., 2:, 1:-1]
    left = p[..., 1:-1, :-2]
    right = p[..., 1:-1, 2:]
    return (up + down) + (left + right) - 4.0 * x


def laplacian_map(img: ImagePlane) -> TextureMap:
    """Laplacian response of each channel of an image plane."""
    chw = torch.from_numpy(np.ascontiguousarray(img.data.transpose(2, 0, 1)))
    out = laplacian_tensor(chw.unsqueeze(0)).squeeze(0)
    return TextureMap(out.numpy().transpose(1, 2, 0))


def edge_map(img: ImagePlane) -> TextureMap:
    """Edge features used by the edge objective; identical to laplacian_map.

    Specialized to C=3 for color images and C=1 for single-channel images by
    the caller; the operator itself is channel-count agnostic.
    """
    return laplacian_map(img)
