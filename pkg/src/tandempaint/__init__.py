"""Line-art colorization: tandem color prediction and adversarial shading."""

from .errors import (
    CheckpointDigestError,
    CheckpointError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigMismatchError,
    DatasetEmptyError,
    DatasetError,
    DecodeError,
    DivergenceError,
    ParameterError,
    ShapeError,
    TandemPaintError,
    UnsupportedFormatError,
)
from .pngio import png_decode, png_encode
from .raster import (
    Raster,
    Rgb,
    extract_outline,
    gaussian_blur,
    resize_cover_crop,
    to_grayscale,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointDigestError",
    "CheckpointError",
    "CheckpointTruncatedError",
    "CheckpointVersionError",
    "ConfigMismatchError",
    "DatasetEmptyError",
    "DatasetError",
    "DecodeError",
    "DivergenceError",
    "ParameterError",
    "Raster",
    "Rgb",
    "ShapeError",
    "TandemPaintError",
    "UnsupportedFormatError",
    "extract_outline",
    "gaussian_blur",
    "png_decode",
    "png_encode",
    "resize_cover_crop",
    "to_grayscale",
    "__version__",
]
