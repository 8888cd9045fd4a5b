"""Composite polarmap construction and backbone input preparation.

The four-quadrant composite is built from the three raw maps plus a
thresholded copy of the perfusion map.  Backbone inputs are the composite
scaled to [0, 255], tiled to three identical channels and centered with the
per-channel means of the backbone's pretraining corpus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .domain import COMPOSITE_SIZE, POLARMAP_SIZE, CompositePolarmap, PolarmapSet

PERFUSION_THRESHOLD = 0.50

# Per-channel (R, G, B) means subtracted after scaling to [0, 255].  These are
# the canonical ImageNet channel means of the original VGG16 preprocessing;
# override via prepare_for_backbone(channel_means=...) if a weights file was
# trained with different centering.
IMAGENET_CHANNEL_MEANS: tuple[float, float, float] = (123.68, 116.779, 103.939)

CHANNEL_ORDER = "RGB"


@dataclass(frozen=True)
class BackboneInput:
    """128x128x3 centered tensor consumed by the convolutional backbone."""

    tensor: np.ndarray  # (128, 128, 3) float64, channels last
    channel_order: str = CHANNEL_ORDER
    centering_constants: tuple[float, float, float] = IMAGENET_CHANNEL_MEANS

    def __post_init__(self) -> None:
        t = np.asarray(self.tensor, dtype=np.float64)
        if t.shape != (COMPOSITE_SIZE, COMPOSITE_SIZE, 3):
            raise ValueError(
                f"backbone input must be ({COMPOSITE_SIZE}, {COMPOSITE_SIZE}, 3), "
                f"got {t.shape}"
            )
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "tensor", t)


def threshold_perfusion(perfusion: np.ndarray, tau: float = PERFUSION_THRESHOLD) -> np.ndarray:
    """Keep pixels strictly greater than tau; zero everything else."""
    arr = np.asarray(perfusion, dtype=np.float64)
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("perfusion values must lie in [0, 1]")
    return np.where(arr > tau, arr, 0.0)


def compose_quadrants(maps: PolarmapSet, tau: float = PERFUSION_THRESHOLD) -> CompositePolarmap:
    """Assemble the 128x128 composite from the three maps + thresholded perfusion."""
    h = POLARMAP_SIZE
    out = np.empty((COMPOSITE_SIZE, COMPOSITE_SIZE), dtype=np.float64)
    out[:h, :h] = maps.perfusion
    out[:h, h:] = maps.systolic_dyssynchrony
    out[h:, :h] = maps.wall_thickening
    out[h:, h:] = threshold_perfusion(maps.perfusion, tau)
    return CompositePolarmap(pixels=out)


def prepare_for_backbone(
    composite: CompositePolarmap,
    channel_means: tuple[float, float, float] = IMAGENET_CHANNEL_MEANS,
) -> BackboneInput:
    """Scale to [0, 255], tile to 3 identical channels, center per channel."""
    scaled = composite.pixels * 255.0
    tensor = np.stack([scaled - m for m in channel_means], axis=-1)
    return BackboneInput(tensor=tensor, centering_constants=tuple(channel_means))


def save_grayscale_png(values: np.ndarray, path) -> None:
    """Debug export: values in [0, 1] written as an 8-bit grayscale image."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("values must lie in [0, 1]")
    img = Image.fromarray(np.rint(arr * 255.0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")
