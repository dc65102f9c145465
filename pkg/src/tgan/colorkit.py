"""sRGB <-> CIE Lab conversions and the grayscale replication operator.

All conversions assume sRGB with the D65 reference white and the standard
sRGB transfer function. L is kept in [0, 100] and a, b in [-128, 128];
network-facing normalization lives in :mod:`tgan.datagen`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

__all__ = [
    "LabImage",
    "rgb_to_lab",
    "lab_to_rgb",
    "l_to_gray3",
    "validate_rgb",
]

# sRGB (linear, D65) -> XYZ, IEC 61966-2-1
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)

# D65 white point, derived from the matrix row sums so that sRGB white
# (1, 1, 1) roundtrips exactly; agrees with (0.95047, 1.0, 1.08883) to 1e-7
_WHITE = _RGB2XYZ @ np.ones(3)

# CIE Lab transfer constants
_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0


def validate_rgb(pixels: np.ndarray) -> np.ndarray:
    """Check an H x W x 3 sRGB array with values in [0, 1]; returns float64."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected an H x W x 3 RGB array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("RGB image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"RGB values must lie in [0, 1], got [{arr.min():.4g}, {arr.max():.4g}]"
        )
    return arr


@dataclass(frozen=True)
class LabImage:
    """A 3-channel image in CIE Lab space.

    L lies in [0, 100]; a and b lie in [-128, 128]. All three channels
    share the same H x W shape.
    """

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        L, a, b = (np.asarray(c, dtype=np.float64) for c in (self.L, self.a, self.b))
        if not (L.shape == a.shape == b.shape) or L.ndim != 2:
            raise ValueError(
                f"Lab channels must share one H x W shape, got {L.shape}, {a.shape}, {b.shape}"
            )
        for name, c in (("L", L), ("a", a), ("b", b)):
            if not np.all(np.isfinite(c)):
                raise ValueError(f"Lab channel {name} contains non-finite values")
        if L.min() < 0.0 or L.max() > 100.0:
            raise ValueError(f"L must lie in [0, 100], got [{L.min():.4g}, {L.max():.4g}]")
        for name, c in (("a", a), ("b", b)):
            if c.min() < -128.0 or c.max() > 128.0:
                raise ValueError(
                    f"{name} must lie in [-128, 128], got [{c.min():.4g}, {c.max():.4g}]"
                )
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.L.shape

    def as_array(self) -> np.ndarray:
        """Stack channels into an H x W x 3 array."""
        return np.stack([self.L, self.a, self.b], axis=-1)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "LabImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[-1] != 3:
            raise ValueError(f"expected H x W x 3, got {arr.shape}")
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    @classmethod
    def white(cls, height: int, width: int) -> "LabImage":
        return cls(
            np.full((height, width), 100.0),
            np.zeros((height, width)),
            np.zeros((height, width)),
        )


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = np.maximum(c, 0.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _f_lab(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPS, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def _f_lab_inv(f: np.ndarray) -> np.ndarray:
    f3 = f**3
    return np.where(f3 > _EPS, f3, (116.0 * f - 16.0) / _KAPPA)


def rgb_to_lab(pixels: np.ndarray) -> LabImage:
    """Convert an H x W x 3 sRGB image (values in [0, 1]) to CIE Lab.

    Follows sRGB linearization -> XYZ (D65) -> Lab. Reference white maps
    to L=100, a=b=0; black maps to L=0.
    """
    arr = validate_rgb(pixels)
    xyz = _srgb_to_linear(arr) @ _RGB2XYZ.T
    fx, fy, fz = (_f_lab(xyz[..., i] / _WHITE[i]) for i in range(3))
    L = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    # guard float round-off at the range edges
    L = np.clip(L, 0.0, 100.0)
    return LabImage(L, a, b)


def lab_to_rgb(lab: LabImage) -> tuple[np.ndarray, int]:
    """Convert a LabImage back to sRGB.

    Returns ``(pixels, clamp_count)`` where pixels is the H x W x 3 sRGB
    array clamped to [0, 1] and clamp_count is the number of channel
    values that fell outside the sRGB gamut before clamping.
    """
    fy = (lab.L + 16.0) / 116.0
    fx = lab.a / 500.0 + fy
    fz = fy - lab.b / 200.0
    xyz = np.stack([_f_lab_inv(fx), _f_lab_inv(fy), _f_lab_inv(fz)], axis=-1) * _WHITE
    rgb = _linear_to_srgb(xyz @ _XYZ2RGB.T)
    clamp_count = int(np.count_nonzero((rgb < -1e-9) | (rgb > 1.0 + 1e-9)))
    return np.clip(rgb, 0.0, 1.0), clamp_count


class _GrayReplicate(torch.autograd.Function):
    """Replicate a single channel into three with an averaged backward pass.

    The gradient of any downstream scalar with respect to the input equals
    the mean, not the sum, of the three per-channel gradients.
    """

    @staticmethod
    def forward(ctx, L: torch.Tensor) -> torch.Tensor:
        return torch.cat([L, L, L], dim=-3)

    @staticmethod
    def backward(ctx, grad_output: torch.Tensor) -> torch.Tensor:
        return grad_output.mean(dim=-3, keepdim=True)


def l_to_gray3(L: torch.Tensor) -> torch.Tensor:
    """Replicate a lightness map into a 3-channel grayscale image.

    Accepts ``(..., 1, H, W)`` or a bare ``(H, W)`` map and returns a
    tensor with three identical channels. The caller supplies L already
    scaled to the downstream feature extractor's input range; this
    operator does not rescale. Its backward rule averages the three
    per-channel gradients (a 1/3 scaling of the usual sum).
    """
    if L.dim() == 2:
        L = L.unsqueeze(0)
    if L.shape[-3] != 1:
        raise ValueError(f"expected a single channel at dim -3, got {L.shape[-3]}")
    return _GrayReplicate.apply(L)
