"""Feed-forward synthesis from user-supplied sketch, texture patches, and
color patches. No segmentation mask exists at test time; nothing in this
module reads or constructs one."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from . import checkpoint as ckpt
from .colorkit import LabImage, lab_to_rgb, rgb_to_lab
from .config import config_from_dict
from .datagen import COLOR_SENTINEL, InputStack, PatchPlacement
from .nets import Generator, GeneratorConfig

SUPPORTED_RESOLUTIONS = (64, 128, 256)


class RequestValidationError(ValueError):
    """A synthesis request failed validation before reaching the model."""


@dataclass
class SynthesisRequest:
    """Test-time conditioning: a sketch plus texture and color patches.

    Texture patches pair an sRGB image with a placement rectangle; color
    patches pair either an (a, b) chroma tuple or an sRGB image with a
    rectangle.
    """

    sketch: np.ndarray
    texture_patches: list[tuple[np.ndarray, PatchPlacement]] = field(default_factory=list)
    color_patches: list[tuple[tuple[float, float] | np.ndarray, PatchPlacement]] = field(
        default_factory=list
    )
    resolution: int | None = None

    def __post_init__(self):
        sk = np.asarray(self.sketch)
        if sk.ndim != 2:
            raise RequestValidationError(f"sketch must be H x W, got shape {sk.shape}")
        self.sketch = (sk > 0.5).astype(np.float32)
        if self.resolution is None:
            self.resolution = self.sketch.shape[0]


def _check_bounds(placement: PatchPlacement, height: int, width: int) -> PatchPlacement:
    try:
        return placement.validate_bounds(height, width)
    except ValueError as exc:
        raise RequestValidationError(str(exc)) from exc


def build_input(req: SynthesisRequest) -> InputStack:
    """Assemble the 5-channel input stack from a synthesis request.

    Texture images are converted to normalized lightness, resized to their
    rectangles, and pasted; color patches fill ab/128 values inside their
    rectangles. Later placements overwrite earlier ones on overlap.
    """
    H, W = req.sketch.shape
    stack = InputStack.blank(H, W)
    stack.sketch = req.sketch.astype(np.float32)

    for image, placement in req.texture_patches:
        _check_bounds(placement, H, W)
        lab = rgb_to_lab(np.asarray(image, dtype=np.float64))
        Ln = (lab.L / 100.0).astype(np.float32)
        if Ln.shape != (placement.h, placement.w):
            Ln = cv2.resize(Ln, (placement.w, placement.h), interpolation=cv2.INTER_LINEAR)
        ys, xs = placement.slices()
        stack.tex_intensity[ys, xs] = np.clip(Ln, 0.0, 1.0)
        stack.tex_mask[ys, xs] = 1.0

    for color, placement in req.color_patches:
        _check_bounds(placement, H, W)
        ys, xs = placement.slices()
        color_arr = np.asarray(color, dtype=np.float64)
        if color_arr.ndim == 1 and color_arr.shape == (2,):
            a_val = np.full((placement.h, placement.w), color_arr[0] / 128.0)
            b_val = np.full((placement.h, placement.w), color_arr[1] / 128.0)
        else:
            lab = rgb_to_lab(color_arr)
            a_val, b_val = lab.a / 128.0, lab.b / 128.0
            if a_val.shape != (placement.h, placement.w):
                a_val = cv2.resize(a_val, (placement.w, placement.h))
                b_val = cv2.resize(b_val, (placement.w, placement.h))
        stack.color_a[ys, xs] = a_val.astype(np.float32)
        stack.color_b[ys, xs] = b_val.astype(np.float32)

    return stack.validate()


def rgb_hex_to_ab(hex_color: str) -> tuple[float, float]:
    """Convert '#rrggbb' to the (a, b) chroma of that color."""
    h = hex_color.lstrip("#")
    if len(h) != 6:
        raise RequestValidationError(f"expected #rrggbb color, got {hex_color!r}")
    rgb = np.array([[int(h[i : i + 2], 16) / 255.0 for i in (0, 2, 4)]])
    lab = rgb_to_lab(rgb[None])
    return float(lab.a[0, 0]), float(lab.b[0, 0])


class SynthesisModel:
    """An immutable generator snapshot loaded from a checkpoint."""

    def __init__(self, checkpoint_path: str | Path):
        payload = ckpt.load(checkpoint_path)
        config = config_from_dict(payload["config"])
        self.generator = Generator(
            GeneratorConfig(
                base_width=config.model.generator_width,
                n_residual=config.model.n_residual,
                skip_connections=config.model.skip_connections,
            )
        )
        self.generator.load_state_dict(payload["generator"])
        self.generator.eval()
        self.resolution = config.resolution
        self.checkpoint_id = ckpt.content_id(checkpoint_path)

    @torch.no_grad()
    def run(self, stack: InputStack) -> LabImage:
        x = torch.from_numpy(stack.as_array()).unsqueeze(0)
        out = self.generator(x)[0].numpy()
        return LabImage(out[0].astype(np.float64), out[1], out[2])


def _resize_stack(stack: InputStack, resolution: int) -> InputStack:
    """Resize a stack channel-aware: nearest for binary/sentinel channels,
    bilinear for the texture intensity."""
    size = (resolution, resolution)
    out = InputStack(
        sketch=cv2.resize(stack.sketch, size, interpolation=cv2.INTER_NEAREST),
        tex_intensity=cv2.resize(stack.tex_intensity, size, interpolation=cv2.INTER_LINEAR),
        tex_mask=cv2.resize(stack.tex_mask, size, interpolation=cv2.INTER_NEAREST),
        color_a=cv2.resize(stack.color_a, size, interpolation=cv2.INTER_NEAREST),
        color_b=cv2.resize(stack.color_b, size, interpolation=cv2.INTER_NEAREST),
    )
    # bilinear can leak intensity outside the nearest-resized mask
    out.tex_intensity = out.tex_intensity * out.tex_mask
    return out.validate()


def synthesize(
    model: SynthesisModel | str | Path, req: SynthesisRequest
) -> tuple[np.ndarray, dict]:
    """Run one generator forward pass and convert to sRGB.

    Returns (H x W x 3 array in [0, 1], meta) where meta carries the
    internal resolution, clamp count, and elapsed seconds. Deterministic
    for a fixed checkpoint and request.
    """
    if not isinstance(model, SynthesisModel):
        model = SynthesisModel(model)
    t0 = time.perf_counter()
    stack = build_input(req)
    native = model.resolution
    out_res = req.resolution
    if stack.shape != (native, native):
        stack = _resize_stack(stack, native)
    lab = model.run(stack)
    rgb, clamp_count = lab_to_rgb(lab)
    if rgb.shape[:2] != (out_res, out_res):
        rgb = np.clip(cv2.resize(rgb, (out_res, out_res), interpolation=cv2.INTER_LINEAR), 0, 1)
    meta = {
        "internal_resolution": native,
        "clamped_values": clamp_count,
        "seconds": time.perf_counter() - t0,
        "checkpoint_id": model.checkpoint_id,
    }
    return rgb, meta
