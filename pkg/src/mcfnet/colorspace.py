"""RGB <-> HSV conversion and NIR channel replication.

Rasters are H x W x C float arrays with every channel in [0,1]. Hue is stored
as a fraction of the full circle ([0,1) rather than degrees) so all channels
share one normalization contract. Achromatic pixels (max == min) get H=0, S=0
to keep the conversion deterministic. Conversions never clip: out-of-range
input is an error, not a silent clamp.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .validation import as_float_array, check_channels, check_range01


class ColorSpace(Enum):
    NIR = "nir"
    RGB = "rgb"
    HSV = "hsv"


_CHANNELS = {ColorSpace.NIR: 1, ColorSpace.RGB: 3, ColorSpace.HSV: 3}


@dataclass(frozen=True)
class ImagePlane:
    """A normalized raster tagged with its color space.

    data: H x W x C float32 array, all values in [0,1]. C=1 for NIR, 3 otherwise.
    """

    data: np.ndarray
    space: ColorSpace

    def __post_init__(self):
        arr = as_float_array(self.data, "ImagePlane.data")
        check_channels(arr, _CHANNELS[self.space], f"{self.space.value} plane")
        check_range01(arr, f"{self.space.value} plane")
        if self.space is ColorSpace.HSV and bool(np.any(arr[..., 0] >= 1.0)):
            raise ValueError("hue channel must lie in [0,1)")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def rgb_to_hsv_array(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB->HSV on an array of shape (..., 3), values in [0,1].

    Returns hue in [0,1), saturation and value in [0,1]. Computed in float64,
    cast back to the input dtype.
    """
    rgb64 = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb64[..., 0], rgb64[..., 1], rgb64[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc

    v = maxc
    s = np.zeros_like(maxc)
    np.divide(delta, maxc, out=s, where=maxc > 0)

    h = np.zeros_like(maxc)
    chrom = delta > 0
    safe = np.where(chrom, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(chrom & (b == maxc), 4.0 + gc - rc, h)
    h = np.where(chrom & (g == maxc), 2.0 + rc - bc, h)
    h = np.where(chrom & (r == maxc), bc - gc, h)
    h = (h / 6.0) % 1.0
    out = np.stack([h, s, v], axis=-1)
    out = out.astype(np.asarray(rgb).dtype, copy=False)
    # hues just below 1.0 can round up to 1.0 under the mod or the dtype cast;
    # fold the wrap point back to 0 so H stays in [0,1)
    out[..., 0][out[..., 0] >= 1.0] = 0.0
    return out


def hsv_to_rgb_array(hsv: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`rgb_to_hsv_array` on (..., 3) arrays."""
    hsv64 = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv64[..., 0], hsv64[..., 1], hsv64[..., 2]
    sector = h * 6.0
    i = np.floor(sector).astype(np.int64) % 6
    f = sector - np.floor(sector)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))

    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    out = np.stack([r, g, b], axis=-1)
    return out.astype(np.asarray(hsv).dtype, copy=False)


def rgb_to_hsv(img: ImagePlane) -> ImagePlane:
    """Convert an RGB plane to HSV (hue scaled to [0,1))."""
    if img.space is not ColorSpace.RGB:
        raise ValueError(f"expected an RGB plane, got {img.space.value}")
    return ImagePlane(rgb_to_hsv_array(img.data), ColorSpace.HSV)


def hsv_to_rgb(img: ImagePlane) -> ImagePlane:
    """Convert an HSV plane back to RGB."""
    if img.space is not ColorSpace.HSV:
        raise ValueError(f"expected an HSV plane, got {img.space.value}")
    return ImagePlane(hsv_to_rgb_array(img.data), ColorSpace.RGB)


def replicate_nir(img: ImagePlane) -> ImagePlane:
    """Expand a single-channel NIR plane to three identical channels."""
    if img.space is not ColorSpace.NIR:
        raise ValueError(f"expected a NIR plane, got {img.space.value}")
    return ImagePlane(np.repeat(img.data, 3, axis=2), ColorSpace.RGB)
