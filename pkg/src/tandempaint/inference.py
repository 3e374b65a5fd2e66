"""End-user colorization paths.

Three entry points share one pipeline: ``colorize_with_hints`` shades an
outline under user-painted color hints, ``predict_scheme`` asks the block
colorist for a scheme, and ``colorize_auto`` chains the two. Hints arrive as
an RGBA layer whose alpha channel is read as binary coverage; covered pixels
are rescaled toward white by the expected-value factor the degradation stage
imposed on training schemes, so clean hand-painted colors land in the same
distribution the shading network saw during training.

Arbitrary input sizes are handled by padding with white to the next multiple
each network requires and cropping the result back; the networks themselves
are fully convolutional, so no resampling is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .models import Weights, colorist_forward, shading_forward
from .prep import (
    DegradeParams,
    DegradeStats,
    effective_blur_sigma,
    removal_probability,
    rescale_for_inference,
)
from .raster import Raster, gaussian_blur, to_grayscale

MIN_SIDE = 32


def ingest_outline(img: Raster) -> Raster:
    """Adapt a decoded image to the 1-channel outline the networks expect.

    RGBA is composited over white first; color is then collapsed to
    luminance. Already-grayscale images pass through untouched.
    """
    if img.channels == 4:
        rgb = img.pixels[:, :, :3]
        a = img.pixels[:, :, 3:4]
        img = Raster.from_array(rgb * a + (1.0 - a))
    if img.channels == 3:
        return to_grayscale(img)
    if img.channels == 1:
        return img
    raise ShapeError(f"cannot read a {img.channels}-channel image as an outline")


def ingest_hints(img: Raster) -> Raster:
    """Validate a decoded image as an RGBA hint layer."""
    if img.channels != 4:
        raise ShapeError(
            f"hints must be RGBA with an alpha channel, got {img.channels} channels"
        )
    return img


@dataclass(frozen=True)
class PadSpec:
    """Bottom/right white padding taking an image to divisible dimensions."""

    height: int
    width: int
    padded_height: int
    padded_width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ParameterError(
                f"original dimensions must be >= 1, got {self.height}x{self.width}"
            )
        if self.padded_height < self.height or self.padded_width < self.width:
            raise ParameterError("padded dimensions are smaller than the original")

    def pad(self, img: Raster, fill: float = 1.0) -> Raster:
        if (img.height, img.width) != (self.height, self.width):
            raise ShapeError(
                f"image is {img.height}x{img.width}, pad spec covers "
                f"{self.height}x{self.width}"
            )
        if (self.padded_height, self.padded_width) == (self.height, self.width):
            return img
        out = np.full(
            (self.padded_height, self.padded_width, img.channels), fill, np.float32
        )
        out[: self.height, : self.width] = img.pixels
        return Raster.from_array(out)

    def crop(self, img: Raster) -> Raster:
        if (img.height, img.width) != (self.padded_height, self.padded_width):
            raise ShapeError(
                f"image is {img.height}x{img.width}, pad spec expects "
                f"{self.padded_height}x{self.padded_width}"
            )
        if (self.padded_height, self.padded_width) == (self.height, self.width):
            return img
        return Raster.from_array(img.pixels[: self.height, : self.width])


def plan_padding(height: int, width: int, multiple: int) -> PadSpec:
    """Next-multiple padding plan for an image of the given dimensions."""
    if multiple < 1:
        raise ParameterError(f"multiple must be >= 1, got {multiple}")
    pad_h = -height % multiple
    pad_w = -width % multiple
    return PadSpec(height, width, height + pad_h, width + pad_w)


def blank_hints(height: int, width: int) -> Raster:
    """A fully transparent hint layer: no opinion anywhere."""
    data = np.ones((height, width, 4), np.float32)
    data[:, :, 3] = 0.0
    return Raster.from_array(data)


def normalize_hints(hints: Raster, stats: DegradeStats, sigma: float) -> Raster:
    """Turn an RGBA hint layer into a shading-network color scheme.

    Alpha is binary coverage: anything above zero keeps its RGB, the rest
    becomes white. Covered colors are then pushed toward white by the
    expected-value rescale and the whole field is blurred, mimicking what the
    degradation pipeline does to clean training colors.
    """
    if hints.channels != 4:
        raise ShapeError(f"hints must be RGBA, got {hints.channels} channels")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    covered = hints.pixels[:, :, 3:4] > 0.0
    rgb = np.where(covered, hints.pixels[:, :, :3], np.float32(1.0))
    scheme = rescale_for_inference(Raster.from_array(rgb), stats)
    return gaussian_blur(scheme, sigma)


def _check_outline(outline: Raster) -> None:
    if outline.channels != 1:
        raise ShapeError(f"outline must have 1 channel, got {outline.channels}")
    if outline.height < MIN_SIDE or outline.width < MIN_SIDE:
        raise ShapeError(
            f"outline must be at least {MIN_SIDE}x{MIN_SIDE}, got "
            f"{outline.height}x{outline.width}"
        )


def _check_shader(weights: Weights) -> None:
    cfg = weights.config
    if cfg.head != "full_res" or cfg.in_channels != 4 or cfg.out_channels != 3:
        raise ParameterError(
            "shading requires a full_res network with 4 inputs and 3 outputs, "
            f"got head={cfg.head!r} in={cfg.in_channels} out={cfg.out_channels}"
        )


def _check_colorist(weights: Weights) -> None:
    cfg = weights.config
    if cfg.head != "block_grid" or cfg.in_channels != 1 or cfg.out_channels != 3:
        raise ParameterError(
            "scheme prediction requires a block_grid network with 1 input and "
            f"3 outputs, got head={cfg.head!r} in={cfg.in_channels} "
            f"out={cfg.out_channels}"
        )


def colorize_with_hints(
    outline: Raster,
    hints: Raster | None,
    shader: Weights,
    degrade: DegradeParams | None = None,
) -> Raster:
    """Shade an outline under an optional RGBA hint layer.

    ``hints=None`` means a fully transparent layer (the blank-scheme path).
    ``degrade`` describes the corpus the shader was trained on; it sets the
    expected-value rescale and blur applied to the hints.
    """
    _check_outline(outline)
    _check_shader(shader)
    if degrade is None:
        degrade = DegradeParams()
    if hints is None:
        hints = blank_hints(outline.height, outline.width)
    if (hints.height, hints.width) != (outline.height, outline.width):
        raise ShapeError(
            f"hints are {hints.height}x{hints.width}, outline is "
            f"{outline.height}x{outline.width}"
        )
    stats = removal_probability(degrade, outline.height, outline.width)
    sigma = effective_blur_sigma(degrade, outline.height, outline.width)
    scheme = normalize_hints(hints, stats, sigma)
    spec = plan_padding(
        outline.height, outline.width, shader.config.required_multiple()
    )
    shaded = shading_forward(spec.pad(outline), spec.pad(scheme), shader)
    return spec.crop(shaded)


def _upsample_grid(grid: Raster, factor: int) -> Raster:
    data = np.repeat(np.repeat(grid.pixels, factor, axis=0), factor, axis=1)
    return Raster.from_array(data)


def predict_scheme(
    outline: Raster,
    colorist: Weights,
    sigma: float | None = None,
) -> Raster:
    """Predict a color scheme for an outline with the block colorist.

    Each predicted cell is expanded to its block by nearest-neighbor
    upsampling, then the field is blurred (``sigma=None`` picks the same
    size-scaled blur the training schemes received).
    """
    _check_outline(outline)
    _check_colorist(colorist)
    if sigma is None:
        sigma = effective_blur_sigma(DegradeParams(), outline.height, outline.width)
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    spec = plan_padding(
        outline.height, outline.width, colorist.config.required_multiple()
    )
    padded = spec.pad(outline)
    grid = colorist_forward(padded, colorist)
    factor = padded.height // grid.height
    scheme = gaussian_blur(_upsample_grid(grid, factor), sigma)
    return spec.crop(scheme)


def colorize_auto(
    outline: Raster,
    colorist: Weights,
    shader: Weights,
    sigma: float | None = None,
) -> Raster:
    """Fully automatic colorization: predict a scheme, then shade with it.

    The predicted scheme skips the expected-value rescale — the colorist
    already regresses blurred clean colors, so its output sits in the
    distribution the shading network expects.
    """
    _check_outline(outline)
    _check_colorist(colorist)
    _check_shader(shader)
    if sigma is None:
        sigma = effective_blur_sigma(DegradeParams(), outline.height, outline.width)
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    multiple = max(
        shader.config.required_multiple(), colorist.config.required_multiple()
    )
    spec = plan_padding(outline.height, outline.width, multiple)
    padded = spec.pad(outline)
    grid = colorist_forward(padded, colorist)
    factor = padded.height // grid.height
    scheme = gaussian_blur(_upsample_grid(grid, factor), sigma)
    shaded = shading_forward(padded, scheme, shader)
    return spec.crop(shaded)
