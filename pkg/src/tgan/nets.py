"""Generator, global lightness discriminator, paired local texture
discriminator, and pluggable frozen feature extractors.

The generator maps the 5-channel input stack to a Lab image whose output
activations guarantee L in [0, 100] and ab in [-128, 128]. Both
discriminators and the feature extractors consume lightness-derived inputs
only; color never reaches them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

TAP_NAMES = ("mid", "deep")
_COLOR_SENTINEL = -200.0


class PatchPair(NamedTuple):
    """Ordered pair of same-size lightness crops: (generated, reference)."""

    patch_g: torch.Tensor
    patch_t: torch.Tensor


@dataclass
class GeneratorConfig:
    base_width: int = 32
    n_residual: int = 5
    skip_connections: bool = True

    input_channels: int = 5  # sketch, texture intensity, texture mask, color a, color b
    output_channels: int = 3


def _conv_block(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
        nn.InstanceNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return F.relu(x + self.body(x))


class Generator(nn.Module):
    """Encoder-decoder with 3 stride-2 downsampling blocks, residual
    bottleneck, and skip connections between mirrored resolutions.

    Output scaling maps tanh activations into Lab ranges, so every forward
    pass satisfies the Lab invariants by construction.
    """

    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        self.config = config or GeneratorConfig()
        w = self.config.base_width

        # the color channels arrive as ab/128 with a -200 sentinel; split
        # that into (masked values, validity) before the first conv so the
        # sentinel magnitude cannot drown the other channels
        self.head = _conv_block(self.config.input_channels + 1, w)
        self.down1 = _conv_block(w, 2 * w, stride=2)
        self.down2 = _conv_block(2 * w, 4 * w, stride=2)
        self.down3 = _conv_block(4 * w, 8 * w, stride=2)
        self.bottleneck = nn.Sequential(
            *[ResidualBlock(8 * w) for _ in range(self.config.n_residual)]
        )
        skip = 1 if self.config.skip_connections else 0
        self.up3 = _conv_block(8 * w + skip * 4 * w, 4 * w)
        self.up2 = _conv_block(4 * w + skip * 2 * w, 2 * w)
        self.up1 = _conv_block(2 * w + skip * w, w)
        self.tail = nn.Conv2d(w, self.config.output_channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.config.input_channels:
            raise ValueError(
                f"expected (N, {self.config.input_channels}, H, W) input, got {tuple(x.shape)}"
            )
        if x.shape[-2] % 8 or x.shape[-1] % 8:
            raise ValueError(f"spatial dims must be divisible by 8, got {tuple(x.shape[-2:])}")
        color_valid = (x[:, 3:4] != _COLOR_SENTINEL).to(x.dtype)
        x = torch.cat(
            [x[:, 0:3], x[:, 3:4] * color_valid, x[:, 4:5] * color_valid, color_valid],
            dim=1,
        )
        h0 = self.head(x)
        h1 = self.down1(h0)
        h2 = self.down2(h1)
        h3 = self.down3(h2)
        y = self.bottleneck(h3)

        def up(y, skip_feat, block):
            y = F.interpolate(y, scale_factor=2, mode="nearest")
            if self.config.skip_connections:
                y = torch.cat([y, skip_feat], dim=1)
            return block(y)

        y = up(y, h2, self.up3)
        y = up(y, h1, self.up2)
        y = up(y, h0, self.up1)
        y = torch.tanh(self.tail(y))
        L = 50.0 * (y[:, 0:1] + 1.0)  # [0, 100]
        ab = 128.0 * y[:, 1:3]  # [-128, 128]
        return torch.cat([L, ab], dim=1)


class GlobalDiscriminator(nn.Module):
    """Patch discriminator over the lightness channel only.

    ``n_blocks`` stride-2 blocks give a score grid of H/2^n x W/2^n; the
    default four blocks suit 256-px training, while desk-scale runs at 64
    px shrink the count so each patch score stays local rather than
    covering the whole frame. The 1-channel input contract keeps color out
    of the adversarial signal by type.
    """

    def __init__(self, base_width: int = 32, n_blocks: int = 4, in_channels: int = 1):
        super().__init__()
        if n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        w = base_width
        self.base_width = w
        self.n_blocks = n_blocks
        self.in_channels = in_channels
        layers = [nn.Conv2d(in_channels, w, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True)]
        cin = w
        for k in range(1, n_blocks):
            cout = w * (2 ** min(k, 3))
            layers += [
                nn.Conv2d(cin, cout, 4, stride=2, padding=1),
                nn.InstanceNorm2d(cout),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            cin = cout
        layers.append(nn.Conv2d(cin, 1, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def score_grid_size(self, height: int, width: int) -> tuple[int, int]:
        """Spatial size of the score map from the stride-2 blocks."""
        h, w = height, width
        for _ in range(self.n_blocks):
            h, w = (h + 2 * 1 - 4) // 2 + 1, (w + 2 * 1 - 4) // 2 + 1
        return h, w

    def forward(self, lightness: torch.Tensor) -> torch.Tensor:
        if lightness.dim() != 4 or lightness.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (N, {self.in_channels}, H, W) lightness input, "
                f"got {tuple(lightness.shape)}"
            )
        return self.body(lightness)


class LocalTextureDiscriminator(nn.Module):
    """Scores whether an ordered pair of lightness patches shares a texture.

    The pair is consumed as a 2-channel stacked input (generated crop,
    reference crop). No normalization layers: texture identity lives
    partly in first-order activation statistics that instance norm would
    strip. Pooled mean and max statistics feed the score head, making the
    score independent of the patch side length.
    """

    def __init__(self, base_width: int = 32):
        super().__init__()
        w = base_width
        self.features = nn.Sequential(
            nn.Conv2d(2, w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.head = nn.Sequential(
            nn.Linear(8 * w, 4 * w),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(4 * w, 1),
        )

    def forward(self, patch_g: torch.Tensor, patch_t: torch.Tensor) -> torch.Tensor:
        if patch_g.shape != patch_t.shape:
            raise ValueError(
                f"patch pair sizes differ: {tuple(patch_g.shape)} vs {tuple(patch_t.shape)}"
            )
        pair = torch.cat([patch_g, patch_t], dim=1)
        h = self.features(pair)
        stats = torch.cat(
            [F.adaptive_avg_pool2d(h, 1), F.adaptive_max_pool2d(h, 1)], dim=1
        ).flatten(1)
        return self.head(stats).squeeze(1)


class FeatureExtractor(nn.Module):
    """Frozen activation-tap provider; subclasses define mid/deep taps."""

    tap_channels: dict[str, int]

    def extract(self, gray3: torch.Tensor, taps=("deep",)) -> dict[str, torch.Tensor]:
        raise NotImplementedError

    def _freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def _check_taps(self, taps) -> tuple[str, ...]:
        taps = tuple(taps)
        unknown = [t for t in taps if t not in TAP_NAMES]
        if unknown:
            raise ValueError(f"unknown taps {unknown}; available: {TAP_NAMES}")
        return taps


def _gabor_kernel(theta: float, wavelength: float, sigma: float, ksize: int) -> torch.Tensor:
    """Zero-mean oriented Gabor filter normalized to unit absolute sum."""
    r = ksize // 2
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1].astype(np.float64)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    g = np.exp(-(xx**2 + yy**2) / (2 * sigma**2)) * np.cos(2 * np.pi * u / wavelength)
    g -= g.mean()
    g /= np.abs(g).sum()
    return torch.from_numpy(g)


class TinyFeatureExtractor(FeatureExtractor):
    """Small fixed deterministic stack for fast tests and desk-scale runs.

    The first layer is an analytic Gabor bank (6 orientations x 3
    wavelengths, reflect padding) so Gram statistics carry orientation and
    frequency content; purely random first-layer features leave flat
    fills as close to a texture as the texture is to itself. The later
    layers are fixed-seed random convolutions. tanh activations keep
    finite-difference gradient checks clean. Expects 3-channel input in
    [0, 1]; taps sit at half (mid) and quarter (deep) resolution.
    """

    _WAVELENGTHS = (4.0, 8.0, 14.0)
    _N_ORIENTATIONS = 6
    _KSIZE = 15
    _GAIN = 8.0

    def __init__(self, seed: int = 1234, mid_channels: int = 12, deep_channels: int = 12,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        bank = [
            _gabor_kernel(k * math.pi / self._N_ORIENTATIONS, lam, 0.5 * lam, self._KSIZE)
            for lam in self._WAVELENGTHS
            for k in range(self._N_ORIENTATIONS)
        ]
        n_bank = len(bank)
        self.conv1 = nn.Conv2d(
            3, n_bank, self._KSIZE, padding=self._KSIZE // 2, bias=False,
            padding_mode="reflect",
        )
        with torch.no_grad():
            weight = torch.stack(bank).unsqueeze(1).repeat(1, 3, 1, 1) / 3.0
            self.conv1.weight.copy_(weight.to(self.conv1.weight.dtype))
        gen = torch.Generator().manual_seed(seed)
        self.conv2 = nn.Conv2d(n_bank, mid_channels, 3, padding=1, padding_mode="reflect")
        self.conv3 = nn.Conv2d(mid_channels, deep_channels, 3, padding=1, padding_mode="reflect")
        for conv in (self.conv2, self.conv3):
            nn.init.normal_(conv.weight, std=0.4, generator=gen)
            nn.init.normal_(conv.bias, std=0.1, generator=gen)
        self.to(dtype)
        self.tap_channels = {"mid": mid_channels, "deep": deep_channels}
        self._freeze()

    def extract(self, gray3: torch.Tensor, taps=("deep",)) -> dict[str, torch.Tensor]:
        taps = self._check_taps(taps)
        out: dict[str, torch.Tensor] = {}
        h = torch.tanh(self._GAIN * self.conv1(gray3))
        h = F.avg_pool2d(h, 2)
        h = torch.tanh(self.conv2(h))
        if "mid" in taps:
            out["mid"] = h
        if "deep" in taps:
            h = F.avg_pool2d(h, 2)
            out["deep"] = torch.tanh(self.conv3(h))
        return out


# VGG-19 feature indices: relu3_2 ends at index 13, relu4_2 at index 22
_VGG_MID_END = 14
_VGG_DEEP_END = 23
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class Vgg19FeatureExtractor(FeatureExtractor):
    """Pretrained VGG-19 taps (mid = relu3_2, deep = relu4_2), frozen.

    Weights load from a local torchvision-format state-dict file; expects
    3-channel input in [0, 1] and applies ImageNet normalization itself.
    """

    def __init__(self, weights_path: str):
        super().__init__()
        from torchvision.models import vgg19

        model = vgg19(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        feats = model.features
        self.slice_mid = nn.Sequential(*[feats[i] for i in range(_VGG_MID_END)])
        self.slice_deep = nn.Sequential(
            *[feats[i] for i in range(_VGG_MID_END, _VGG_DEEP_END)]
        )
        self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        self.tap_channels = {"mid": 256, "deep": 512}
        self._freeze()

    def extract(self, gray3: torch.Tensor, taps=("deep",)) -> dict[str, torch.Tensor]:
        taps = self._check_taps(taps)
        x = (gray3 - self.mean) / self.std
        out: dict[str, torch.Tensor] = {}
        h = self.slice_mid(x)
        if "mid" in taps:
            out["mid"] = h
        if "deep" in taps:
            out["deep"] = self.slice_deep(h)
        return out


def extract_features(fe: FeatureExtractor, gray3: torch.Tensor, taps=("deep",)):
    """Functional wrapper over ``fe.extract`` with tap validation."""
    return fe.extract(gray3, taps)


def build_feature_extractor(kind: str = "tiny", **kwargs) -> FeatureExtractor:
    if kind == "tiny":
        return TinyFeatureExtractor(**kwargs)
    if kind == "vgg19":
        return Vgg19FeatureExtractor(**kwargs)
    raise ValueError(f"unknown feature extractor kind {kind!r}")
