"""Still-image analysis and content-based shape cataloging toolkit."""

from .raster import (
    Connectivity,
    GreyImage,
    Histogram1D,
    LabelImage,
    MorphOp,
    NOT_ASSIGNED,
)

__all__ = [
    "Connectivity",
    "GreyImage",
    "Histogram1D",
    "LabelImage",
    "MorphOp",
    "NOT_ASSIGNED",
]

__version__ = "0.1.0"
