"""The four training objectives and their weighted composition.

All reconstruction-style norms are mean absolute error, so the loss weights
stay scale-free across image sizes. The adversarial value function is the
log-form over patch probabilities; the discriminator ascends it while the
generator descends the non-saturating -log D(fake) surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import torch

from .errors import NumericError
from .texture import laplacian_tensor

LOG_EPS = 1e-7

Scalar = Union[float, torch.Tensor]


@dataclass(frozen=True)
class LossWeights:
    lambda_cyc: float = 10.0
    lambda_pair: float = 10.0
    lambda_edge: float = 5.0

    def __post_init__(self):
        for name in ("lambda_cyc", "lambda_pair", "lambda_edge"):
            v = getattr(self, name)
            if not (v >= 0.0 and v == v and v != float("inf")):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values plus their exact weighted sum."""

    gan: Scalar
    pair: Scalar
    cyc: Scalar
    edge: Scalar
    total: Scalar

    def detached(self) -> "LossBreakdown":
        def to_float(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)

        return LossBreakdown(*(to_float(getattr(self, f))
                               for f in ("gan", "pair", "cyc", "edge", "total")))


def _require_finite(value: torch.Tensor, name: str) -> None:
    if not bool(torch.isfinite(value).all()):
        raise NumericError(f"{name} contains non-finite values")


def _mean_abs_diff(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def gan_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Adversarial value: mean log D(real) + mean log(1 - D(fake)).

    Inputs are patch probabilities in (0,1), clamped away from {0,1} before
    the log. The discriminator maximizes this quantity.
    """
    _require_finite(d_real, "d_real")
    _require_finite(d_fake, "d_fake")
    d_real = d_real.clamp(LOG_EPS, 1.0 - LOG_EPS)
    d_fake = d_fake.clamp(LOG_EPS, 1.0 - LOG_EPS)
    return torch.log(d_real).mean() + torch.log(1.0 - d_fake).mean()


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Minimization form of the adversarial value for discriminator updates."""
    return -gan_loss(d_real, d_fake)


def generator_gan_loss(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator objective: -mean log D(fake)."""
    _require_finite(d_fake, "d_fake")
    return -torch.log(d_fake.clamp(LOG_EPS, 1.0 - LOG_EPS)).mean()


def pair_loss(pred_rgb: torch.Tensor, gt_rgb: torch.Tensor,
              pred_nir: torch.Tensor, gt_nir: torch.Tensor) -> torch.Tensor:
    """Paired supervision: mean-L1 on the colorized leg plus the reverse leg."""
    return _mean_abs_diff(pred_rgb, gt_rgb) + _mean_abs_diff(pred_nir, gt_nir)


def cycle_loss(recon_nir: torch.Tensor, orig_nir: torch.Tensor,
               recon_rgb: torch.Tensor, orig_rgb: torch.Tensor) -> torch.Tensor:
    """Round-trip consistency: mean-L1 of both reconstruction residuals."""
    return _mean_abs_diff(recon_nir, orig_nir) + _mean_abs_diff(recon_rgb, orig_rgb)


def edge_loss(pred_rgb: torch.Tensor, gt_rgb: torch.Tensor,
              pred_nir: torch.Tensor, gt_nir: torch.Tensor) -> torch.Tensor:
    """Mean-L1 between Laplacian edge maps of predictions and ground truth."""
    if pred_rgb.shape != gt_rgb.shape:
        raise ValueError(
            f"shape mismatch: {tuple(pred_rgb.shape)} vs {tuple(gt_rgb.shape)}")
    if pred_nir.shape != gt_nir.shape:
        raise ValueError(
            f"shape mismatch: {tuple(pred_nir.shape)} vs {tuple(gt_nir.shape)}")
    rgb_term = (laplacian_tensor(pred_rgb) - laplacian_tensor(gt_rgb)).abs().mean()
    nir_term = (laplacian_tensor(pred_nir) - laplacian_tensor(gt_nir)).abs().mean()
    return rgb_term + nir_term


def hsv_supervision_loss(pred_hsv: torch.Tensor,
                         target_hsv: torch.Tensor) -> torch.Tensor:
    """Mean-L1 between predicted and true HSV images.

    Plain L1 on the [0,1) hue encoding; the wrap discontinuity at red is an
    accepted modeling choice.
    """
    return _mean_abs_diff(pred_hsv, target_hsv)


def total_loss(gan: Scalar, pair: Scalar, cyc: Scalar, edge: Scalar,
               weights: LossWeights) -> LossBreakdown:
    """Weighted composite: gan + l_cyc*cyc + l_pair*pair + l_edge*edge."""
    for name, part in (("gan", gan), ("pair", pair), ("cyc", cyc), ("edge", edge)):
        if isinstance(part, torch.Tensor):
            _require_finite(part, name)
        elif not (part == part and abs(part) != float("inf")):
            raise NumericError(f"{name} is non-finite: {part}")
    total = (gan + weights.lambda_cyc * cyc + weights.lambda_pair * pair
             + weights.lambda_edge * edge)
    return LossBreakdown(gan=gan, pair=pair, cyc=cyc, edge=edge, total=total)
