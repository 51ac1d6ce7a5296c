"""Scikit-learn style estimator facade over the training loop.

Wraps dataset assembly, the two-stage trainer, and batched inference behind
fit/predict/score so the colorizer composes with sklearn pipelines and model
selection utilities.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .colorspace import ColorSpace, ImagePlane
from .data import PairDataset, SamplePair
from .losses import LossWeights
from .metrics import psnr
from .trainer import TrainConfig, train
from .validation import check_divisible, check_range01


def _as_nir_stack(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4 or arr.shape[3] != 1:
        raise ValueError(
            f"X must be (n, H, W) or (n, H, W, 1), got shape {arr.shape}")
    check_range01(arr, "X")
    check_divisible(arr.shape[1], 8, "image height")
    check_divisible(arr.shape[2], 8, "image width")
    return arr


def _as_rgb_stack(y, n: int) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float32)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValueError(f"y must be (n, H, W, 3), got shape {arr.shape}")
    if arr.shape[0] != n:
        raise ValueError(f"X has {n} samples but y has {arr.shape[0]}")
    check_range01(arr, "y")
    return arr


class NirColorizer(BaseEstimator):
    """NIR-to-RGB colorizer with a fit/predict interface.

    fit(X, y) trains the three-branch colorization network on paired NIR/RGB
    stacks; predict(X) returns colorized images. Defaults are desk-scale so
    the estimator is usable on a CPU; raise the widths and epochs for real
    datasets.
    """

    def __init__(self, total_epochs=40, stage1_end=30, batch_size=2,
                 base_lr=2e-4, lambda_cyc=10.0, lambda_pair=10.0,
                 lambda_edge=5.0, grm_width=16, cfem_width=16,
                 fusion_width=16, disc_width=16, feature_channels=16,
                 spade_hidden=16, use_texture=True, use_multiscale=True,
                 use_hsv_cfem=True, seed=0):
        self.total_epochs = total_epochs
        self.stage1_end = stage1_end
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.lambda_cyc = lambda_cyc
        self.lambda_pair = lambda_pair
        self.lambda_edge = lambda_edge
        self.grm_width = grm_width
        self.cfem_width = cfem_width
        self.fusion_width = fusion_width
        self.disc_width = disc_width
        self.feature_channels = feature_channels
        self.spade_hidden = spade_hidden
        self.use_texture = use_texture
        self.use_multiscale = use_multiscale
        self.use_hsv_cfem = use_hsv_cfem
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            total_epochs=self.total_epochs, stage1_end=self.stage1_end,
            batch_size=self.batch_size, base_lr=self.base_lr,
            weights=LossWeights(self.lambda_cyc, self.lambda_pair,
                                self.lambda_edge),
            grm_width=self.grm_width, cfem_width=self.cfem_width,
            fusion_width=self.fusion_width, disc_width=self.disc_width,
            feature_channels=self.feature_channels,
            spade_hidden=self.spade_hidden, use_texture=self.use_texture,
            use_multiscale=self.use_multiscale,
            use_hsv_cfem=self.use_hsv_cfem, augment=None, seed=self.seed)

    def fit(self, X, y):
        nir = _as_nir_stack(X)
        rgb = _as_rgb_stack(y, nir.shape[0])
        pairs = [SamplePair(ImagePlane(nir[i], ColorSpace.NIR),
                            ImagePlane(rgb[i], ColorSpace.RGB), f"fit_{i:04d}")
                 for i in range(nir.shape[0])]
        result = train(self._config(), PairDataset(pairs))
        self.bundle_ = result.bundle
        self.config_ = result.config
        self.log_ = result.log
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "bundle_"):
            raise RuntimeError("this NirColorizer instance is not fitted yet")
        nir = _as_nir_stack(X)
        self.bundle_.train_mode(False)
        outputs = []
        with torch.no_grad():
            for i in range(0, nir.shape[0], max(self.batch_size, 1)):
                chunk = torch.from_numpy(
                    nir[i:i + self.batch_size].transpose(0, 3, 1, 2))
                out = self.bundle_.colorizer(chunk)
                outputs.append(out.y_rgb.numpy().transpose(0, 2, 3, 1))
        return np.concatenate(outputs, axis=0)

    def score(self, X, y) -> float:
        """Mean PSNR (dB) of predictions against ground truth."""
        rgb = _as_rgb_stack(y, np.asarray(X).shape[0])
        preds = self.predict(X)
        return float(np.mean([psnr(p, g) for p, g in zip(preds, rgb)]))
