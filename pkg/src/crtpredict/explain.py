"""Grad-CAM over the image branch, heatmap overlays, quadrant scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .domain import COMPOSITE_SIZE, CompositePolarmap
from .models import (
    DEFAULT_CAM_LAYER,
    ModelKind,
    MultiInputNet,
    TrainedModel,
    VGG_CONV_LAYERS,
    images_to_tensor,
)
from .polarmap import BackboneInput


@dataclass(frozen=True)
class Heatmap:
    """Non-negative class-evidence map, max-normalized to [0, 1]."""

    values: np.ndarray  # (128, 128)
    source_layer: str
    target_class: str = "responder"

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (COMPOSITE_SIZE, COMPOSITE_SIZE):
            raise ValueError(f"heatmap must be {COMPOSITE_SIZE}x{COMPOSITE_SIZE}, got {v.shape}")
        if v.min() < 0 or v.max() > 1:
            raise ValueError("heatmap values must lie in [0, 1]")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def available_cam_layers() -> list[str]:
    return sorted(VGG_CONV_LAYERS, key=VGG_CONV_LAYERS.get)


def grad_cam(
    model: TrainedModel,
    sample: tuple[BackboneInput, np.ndarray],
    layer: str = DEFAULT_CAM_LAYER,
) -> Heatmap:
    """Gradient-weighted activation map for the responder logit.

    Channel weights are the spatial mean of d(logit)/d(activation) at the
    named convolutional activation; the rectified weighted sum is bilinearly
    upsampled to the composite size and normalized by its maximum (an all-zero
    map stays all-zero).
    """
    if model.kind != ModelKind.MULTI_INPUT_DL:
        raise ValueError("grad_cam requires the multi-input deep model")
    if layer not in VGG_CONV_LAYERS:
        raise ValueError(
            f"unknown layer {layer!r}; available layers: {', '.join(available_cam_layers())}"
        )
    net: MultiInputNet = model.predictor  # type: ignore[assignment]
    net.eval()

    image, vector = sample
    images = images_to_tensor(image.tensor[None]).requires_grad_(True)
    tabular = torch.as_tensor(
        np.atleast_2d(np.asarray(vector, dtype=np.float64)), dtype=torch.float32
    )

    captured: dict[str, torch.Tensor] = {}
    activation_index = VGG_CONV_LAYERS[layer] + 1  # the conv's ReLU output
    hook = net.backbone[activation_index].register_forward_hook(
        lambda module, inputs, output: captured.update(act=output)
    )
    try:
        logit = net(images, tabular).squeeze(0)
        grads = torch.autograd.grad(logit, captured["act"])[0]
    finally:
        hook.remove()

    weights = grads.mean(dim=(2, 3), keepdim=True)
    cam = torch.relu((weights * captured["act"]).sum(dim=1, keepdim=True))
    cam = torch.nn.functional.interpolate(
        cam, size=(COMPOSITE_SIZE, COMPOSITE_SIZE), mode="bilinear", align_corners=False
    )[0, 0]
    values = cam.detach().numpy().astype(np.float64)
    peak = values.max()
    if peak > 0:
        values = values / peak
    return Heatmap(values=values, source_layer=layer)


def colormap(values: np.ndarray) -> np.ndarray:
    """Fixed blue-to-red ramp: v -> (v, 0, 1 - v)."""
    v = np.asarray(values, dtype=np.float64)
    return np.stack([v, np.zeros_like(v), 1.0 - v], axis=-1)


def overlay(
    heatmap: Heatmap, composite: CompositePolarmap, alpha: float = 0.4
) -> np.ndarray:
    """Blend the colormapped heatmap over the grayscale composite."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    if heatmap.values.shape != composite.pixels.shape:
        raise ValueError(
            f"heatmap {heatmap.values.shape} does not match composite {composite.pixels.shape}"
        )
    gray = np.repeat(composite.pixels[:, :, None], 3, axis=2)
    return (1.0 - alpha) * gray + alpha * colormap(heatmap.values)


def quadrant_importance(heatmap: Heatmap) -> tuple[float, float, float, float]:
    """Mean heat per quadrant in (TL, TR, BL, BR) order."""
    h = COMPOSITE_SIZE // 2
    v = heatmap.values
    return (
        float(v[:h, :h].mean()),
        float(v[:h, h:].mean()),
        float(v[h:, :h].mean()),
        float(v[h:, h:].mean()),
    )


def save_rgb_png(pixels: np.ndarray, path) -> None:
    """Write an RGB image with components in [0, 1] as 8-bit PNG."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) array, got {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("components must lie in [0, 1]")
    Image.fromarray(np.rint(arr * 255.0).astype(np.uint8), mode="RGB").save(path, format="PNG")
