"""Image quality metrics (PSNR, SSIM, angular error) and directory reports.

The perceptual column is an injectable provider: any callable taking two RGB
planes and returning a scalar. No pretrained feature network ships with the
package, so the column stays empty unless a provider is supplied.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .colorspace import ColorSpace, ImagePlane
from .data import load_image_plane
from .errors import DataError

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

PerceptualProvider = Callable[[ImagePlane, ImagePlane], float]


def _as_rgb_array(img) -> np.ndarray:
    arr = img.data if isinstance(img, ImagePlane) else np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {arr.shape}")
    return arr.astype(np.float64)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(pred, gt) -> float:
    """Peak signal-to-noise ratio in dB over all channels, capped at 100."""
    p, g = _as_rgb_array(pred), _as_rgb_array(gt)
    _check_same_shape(p, g)
    mse = float(np.mean((p - g) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian window."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _windowed_mean(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    views = sliding_window_view(x, window.shape)
    return np.einsum("ijkl,kl->ij", views, window)


def ssim(pred, gt) -> float:
    """Structural similarity on the channel-mean luminance.

    Gaussian 11x11 window (sigma 1.5), stabilizers C1=(0.01)^2 and
    C2=(0.03)^2 on the [0,1] range, averaged over all fully-interior windows.
    """
    p, g = _as_rgb_array(pred), _as_rgb_array(gt)
    _check_same_shape(p, g)
    lum_p = p.mean(axis=2)
    lum_g = g.mean(axis=2)
    if min(lum_p.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {lum_p.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = gaussian_window()
    mu_p = _windowed_mean(lum_p, window)
    mu_g = _windowed_mean(lum_g, window)
    var_p = _windowed_mean(lum_p ** 2, window) - mu_p ** 2
    var_g = _windowed_mean(lum_g ** 2, window) - mu_g ** 2
    cov = _windowed_mean(lum_p * lum_g, window) - mu_p * mu_g
    num = (2 * mu_p * mu_g + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_p ** 2 + mu_g ** 2 + SSIM_C1) * (var_p + var_g + SSIM_C2)
    return float(np.mean(num / den))


def angular_error(pred, gt) -> float:
    """Mean per-pixel angle (degrees) between predicted and true RGB vectors.

    Pixels where either vector is zero contribute 0 by convention.
    """
    p, g = _as_rgb_array(pred), _as_rgb_array(gt)
    _check_same_shape(p, g)
    dot = np.sum(p * g, axis=2)
    norm = np.linalg.norm(p, axis=2) * np.linalg.norm(g, axis=2)
    cos = np.ones_like(dot)
    np.divide(dot, norm, out=cos, where=norm > 0)
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    angles[norm == 0] = 0.0
    return float(np.mean(angles))


@dataclass(frozen=True)
class ImageMetrics:
    id: str
    psnr: float
    ssim: float
    ae: float
    perceptual: Optional[float] = None


@dataclass(frozen=True)
class MetricsReport:
    per_image: list[ImageMetrics]
    mean_psnr: float
    mean_ssim: float
    mean_ae: float
    mean_perceptual: Optional[float] = None

    @classmethod
    def from_rows(cls, rows: list[ImageMetrics]) -> "MetricsReport":
        if not rows:
            raise ValueError("cannot build a report from zero images")
        perceptuals = [r.perceptual for r in rows if r.perceptual is not None]
        return cls(
            per_image=rows,
            mean_psnr=float(np.mean([r.psnr for r in rows])),
            mean_ssim=float(np.mean([r.ssim for r in rows])),
            mean_ae=float(np.mean([r.ae for r in rows])),
            mean_perceptual=(float(np.mean(perceptuals))
                             if len(perceptuals) == len(rows) else None),
        )

    def write(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "psnr", "ssim", "ae", "perceptual"])
            for row in self.per_image:
                writer.writerow([row.id, row.psnr, row.ssim, row.ae,
                                 "" if row.perceptual is None else row.perceptual])
            writer.writerow(["aggregate", self.mean_psnr, self.mean_ssim,
                             self.mean_ae,
                             "" if self.mean_perceptual is None
                             else self.mean_perceptual])
        with open(out_dir / "report.json", "w") as fh:
            json.dump({
                "per_image": [vars(r) for r in self.per_image],
                "aggregate": {"psnr": self.mean_psnr, "ssim": self.mean_ssim,
                              "ae": self.mean_ae,
                              "perceptual": self.mean_perceptual},
            }, fh, indent=2)


def evaluate(pred_dir: Path | str, gt_dir: Path | str,
             out_dir: Path | str | None = None,
             perceptual: PerceptualProvider | None = None) -> MetricsReport:
    """Compare two directories of RGB PNGs matched by stem.

    Raises DataError naming every unmatched stem; writes report.csv and
    report.json when out_dir is given.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise DataError(f"directory does not exist: {d}")
    pred_files = {p.stem: p for p in pred_dir.glob("*.png")}
    gt_files = {p.stem: p for p in gt_dir.glob("*.png")}
    unmatched = sorted(set(pred_files) ^ set(gt_files))
    if unmatched:
        raise DataError(
            f"{len(unmatched)} unmatched stem(s): " + ", ".join(unmatched))
    if not pred_files:
        raise DataError(f"no PNG files found in {pred_dir}")

    rows = []
    for stem in sorted(pred_files):
        pred = load_image_plane(pred_files[stem], ColorSpace.RGB)
        gt = load_image_plane(gt_files[stem], ColorSpace.RGB)
        rows.append(ImageMetrics(
            id=stem, psnr=psnr(pred, gt), ssim=ssim(pred, gt),
            ae=angular_error(pred, gt),
            perceptual=(float(perceptual(pred, gt))
                        if perceptual is not None else None)))
    report = MetricsReport.from_rows(rows)
    if out_dir is not None:
        report.write(Path(out_dir))
    return report
