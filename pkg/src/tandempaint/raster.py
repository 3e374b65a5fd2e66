"""Raster data model and the primitive image operations built on it.

A :class:`Raster` is an immutable H x W x C block of float32 intensities in
[0, 1], channel-interleaved and row-major. Everything else in the toolkit
(outlines, color schemes, hints, network inputs and outputs) is a Raster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError

_VALID_CHANNELS = (1, 3, 4)

# Rec. 601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)

# Outline extraction defaults, in unit-step gradient units (a full 0 -> 1
# intensity step produces magnitude ~1 before smoothing). The source method
# leaves these free, so they are exposed as parameters.
DEFAULT_LOW_THRESH = 0.1
DEFAULT_HIGH_THRESH = 0.2
OUTLINE_SMOOTH_SIGMA = 1.0


@dataclass(frozen=True)
class Rgb:
    """A color with unit-interval components."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ParameterError(f"Rgb.{name} must be in [0, 1], got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float32)


@dataclass(frozen=True)
class Raster:
    """Immutable unit-interval image.

    ``pixels`` has shape (height, width, channels), dtype float32, and is
    marked read-only so instances are safe to share across threads.
    """

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError(
                f"raster dimensions must be >= 1, got {self.width}x{self.height}"
            )
        if self.channels not in _VALID_CHANNELS:
            raise ParameterError(
                f"channels must be one of {_VALID_CHANNELS}, got {self.channels}"
            )
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.dtype != np.float32:
            raise ParameterError("pixels must be a float32 ndarray")
        if p.shape != (self.height, self.width, self.channels):
            raise ParameterError(
                f"pixel array shape {p.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if not np.all(np.isfinite(p)):
            raise ParameterError("pixel intensities must be finite")
        if p.size and (p.min() < 0.0 or p.max() > 1.0):
            raise ParameterError("pixel intensities must lie in [0, 1]")
        p.flags.writeable = False

    @classmethod
    def from_array(cls, arr: np.ndarray, copy: bool = True) -> "Raster":
        """Build a Raster from an (H, W) or (H, W, C) array.

        With ``copy=False`` the array is adopted when possible; callers must
        not hold a writable reference afterwards.
        """
        a = np.array(arr, dtype=np.float32, order="C", copy=True if copy else None)
        if a.ndim == 2:
            a = a[:, :, np.newaxis]
        if a.ndim != 3:
            raise ParameterError(f"expected 2-D or 3-D array, got shape {np.shape(arr)}")
        h, w, c = a.shape
        return cls(width=w, height=h, channels=c, pixels=a)

    @classmethod
    def filled(cls, width: int, height: int, channels: int, value) -> "Raster":
        """Constant image. ``value`` is a scalar, an Rgb, or a per-channel sequence."""
        if isinstance(value, Rgb):
            value = (value.r, value.g, value.b)
        a = np.empty((height, width, channels), dtype=np.float32)
        a[:] = np.asarray(value, dtype=np.float32)
        return cls(width=width, height=height, channels=channels, pixels=a)

    def plane(self, index: int) -> "Raster":
        """One channel extracted as a single-channel Raster."""
        return Raster.from_array(self.pixels[:, :, index : index + 1])


def to_grayscale(img: Raster) -> Raster:
    """Collapse to a single luma channel (alpha, if present, is ignored)."""
    if img.channels == 1:
        return img
    gray = img.pixels[:, :, :3].astype(np.float64) @ _LUMA
    return Raster.from_array(np.clip(gray, 0.0, 1.0).astype(np.float32), copy=False)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian on an (H, W) or (H, W, C) float64 array.

    Kernel truncated at radius ceil(3*sigma) and renormalized; borders are
    reflect-padded (edge pixel not repeated), which keeps mostly-white
    schemes from darkening at the frame.
    """
    k = _gaussian_kernel(sigma)
    out = ndimage.convolve1d(data, k, axis=0, mode="mirror")
    out = ndimage.convolve1d(out, k, axis=1, mode="mirror")
    return out


def gaussian_blur(img: Raster, sigma: float) -> Raster:
    """Gaussian blur with a truncated, renormalized separable kernel.

    sigma = 0 returns the input unchanged. Channels never mix, so blurring
    a channel split equals splitting the blurred image.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    out = _blur_array(img.pixels.astype(np.float64), sigma)
    return Raster.from_array(np.clip(out, 0.0, 1.0).astype(np.float32), copy=False)


def _gradient_magnitude(gray: np.ndarray, smooth_sigma: float) -> np.ndarray:
    """Sobel-style gradient magnitude of a smoothed (H, W) float64 image.

    Scaled so a unit intensity step yields magnitude ~1: the Sobel kernel
    factorizes into a [1, 2, 1]/4 cross-smoother and a central difference.
    """
    sm = _blur_array(gray, smooth_sigma) if smooth_sigma > 0 else gray
    cross = np.array([0.25, 0.5, 0.25], dtype=np.float64)
    diff = np.array([1.0, 0.0, -1.0], dtype=np.float64)
    gx = ndimage.convolve1d(ndimage.convolve1d(sm, cross, axis=0, mode="mirror"), diff, axis=1, mode="mirror")
    gy = ndimage.convolve1d(ndimage.convolve1d(sm, cross, axis=1, mode="mirror"), diff, axis=0, mode="mirror")
    return np.hypot(gx, gy)


def _hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Boolean edge mask: pixels >= low connected (8-way) to a pixel >= high."""
    weak = mag >= low
    strong = mag >= high
    if not strong.any():
        return np.zeros_like(weak)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    keep = np.unique(labels[strong])
    keep = keep[keep > 0]
    return np.isin(labels, keep)


def extract_outline(
    img: Raster,
    low_thresh: float = DEFAULT_LOW_THRESH,
    high_thresh: float = DEFAULT_HIGH_THRESH,
) -> Raster:
    """Line-art style edge map: dark strokes (0.0) on white (1.0).

    Pipeline: luma -> Gaussian smooth (sigma 1.0) -> Sobel-style gradient
    magnitude -> hysteresis thresholding -> polarity inversion. Thresholds
    are in unit-step gradient units; raising them never adds edge pixels.
    """
    if img.channels != 3:
        raise ParameterError(f"outline extraction needs a 3-channel image, got {img.channels}")
    if not (0.0 <= low_thresh <= high_thresh):
        raise ParameterError(
            f"need 0 <= low <= high, got low={low_thresh}, high={high_thresh}"
        )
    gray = img.pixels.astype(np.float64) @ _LUMA
    mag = _gradient_magnitude(gray, OUTLINE_SMOOTH_SIGMA)
    edges = _hysteresis(mag, low_thresh, high_thresh)
    return Raster.from_array(1.0 - edges.astype(np.float32), copy=False)


def _resize_bilinear(data: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, C) float64 array, pixel-center aligned."""
    h, w = data.shape[:2]
    ys = np.clip((np.arange(new_h, dtype=np.float64) + 0.5) * h / new_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(new_w, dtype=np.float64) + 0.5) * w / new_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    # a + w*(b - a) keeps constants and integral grids bit-exact.
    top = data[y0][:, x0] + wx * (data[y0][:, x1] - data[y0][:, x0])
    bot = data[y1][:, x0] + wx * (data[y1][:, x1] - data[y1][:, x0])
    return top + wy * (bot - top)


def resize_cover_crop(img: Raster, side: int) -> Raster:
    """Scale so the shorter dimension equals ``side``, then center-crop.

    Deterministic by construction: bilinear interpolation and a fixed
    center crop, no random augmentation.
    """
    if side < 16:
        raise ParameterError(f"side must be >= 16, got {side}")
    h, w = img.height, img.width
    if h <= w:
        new_h = side
        new_w = max(side, round(w * side / h))
    else:
        new_w = side
        new_h = max(side, round(h * side / w))
    data = _resize_bilinear(img.pixels.astype(np.float64), new_h, new_w)
    top = (new_h - side) // 2
    left = (new_w - side) // 2
    out = data[top : top + side, left : left + side]
    return Raster.from_array(np.clip(out, 0.0, 1.0).astype(np.float32), copy=False)
