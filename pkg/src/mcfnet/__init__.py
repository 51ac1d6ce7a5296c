"""Three-branch NIR-to-RGB colorization: texture preservation, HSV color
feature embedding, and geometry reconstruction, trained CycleGAN-style."""

from .colorspace import (ColorSpace, ImagePlane, hsv_to_rgb, replicate_nir,
                         rgb_to_hsv)
from .data import (AugmentSpec, PairDataset, SamplePair, augment,
                   epoch_batches, load_dataset, load_pairs,
                   make_synthetic_pairs)
from .estimator import NirColorizer
from .losses import (LossBreakdown, LossWeights, cycle_loss, edge_loss,
                     gan_loss, pair_loss, total_loss)
from .metrics import MetricsReport, angular_error, evaluate, psnr, ssim
from .texture import TextureMap, edge_map, laplacian_map
from .trainer import (Checkpoint, TrainConfig, TrainResult, load_checkpoint,
                      lr_at_epoch, save_checkpoint, train)

__all__ = [
    "AugmentSpec", "Checkpoint", "ColorSpace", "ImagePlane", "LossBreakdown",
    "LossWeights", "MetricsReport", "NirColorizer", "PairDataset",
    "SamplePair", "TextureMap", "TrainConfig", "TrainResult",
    "angular_error", "augment", "cycle_loss", "edge_loss", "edge_map",
    "epoch_batches", "evaluate", "gan_loss", "hsv_to_rgb", "laplacian_map",
    "load_checkpoint", "load_dataset", "load_pairs", "lr_at_epoch",
    "make_synthetic_pairs", "pair_loss", "psnr", "replicate_nir",
    "rgb_to_hsv", "save_checkpoint", "ssim", "total_loss", "train",
]
