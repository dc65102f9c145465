"""Loss terms and combined objectives with exact gradient-routing semantics.

Structure losses (feature, adversarial, style, pixel, local texture) are
built exclusively from the L channel; the color loss exclusively from ab.
Because each term only ever slices its own channels, autograd yields
exactly-zero gradients on the channels a term does not own.

Objectives take Lab-range tensors (N, 3, H, W) and normalize internally
(L/100, ab/128) before applying losses, so reported term magnitudes are
resolution- and range-independent.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, fields

import numpy as np
import torch
import torch.nn.functional as F

from .colorkit import l_to_gray3
from .datagen import (
    MIN_PATCH_OVERLAP,
    PatchPlacement,
    SamplingError,
    SegmentationMask,
    derive_seed,
)
from .nets import FeatureExtractor, LocalTextureDiscriminator

STYLE_TAPS = ("mid", "deep")


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights of the combined objectives.

    adv/style/pixel/color weight the global terms; local_pixel and
    local_adv weight the terms inside the local texture loss (the local
    style term is unweighted, matching the combined-objective structure).
    """

    adv: float = 1.0
    style: float = 0.1
    pixel: float = 10.0
    color: float = 100.0
    local_pixel: float = 10.0
    local_adv: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be nonnegative")


@dataclass(frozen=True)
class AblationFlags:
    """Loss on/off switches mirroring the ablation configurations."""

    disable_style: bool = False
    disable_adversarial: bool = False
    disable_local_texture: bool = False


@dataclass
class LossReport:
    """Per-term scalars for one objective evaluation.

    ``total`` is the weighted sum of the active terms; disabled terms are
    reported as exactly zero.
    """

    feature: float = 0.0
    adv: float = 0.0
    style: float = 0.0
    pixel: float = 0.0
    color: float = 0.0
    local_style: float = 0.0
    local_pixel: float = 0.0
    local_adv: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json_line(self) -> str:
        return json.dumps(self.as_dict())

    def weighted_sum(self, weights: LossWeights) -> float:
        """Recompute the total from the stored terms (oracle for tests)."""
        return (
            self.feature
            + weights.adv * self.adv
            + weights.style * self.style
            + weights.pixel * self.pixel
            + weights.color * self.color
            + self.local_style
            + weights.local_pixel * self.local_pixel
            + weights.local_adv * self.local_adv
        )


# ---------------------------------------------------------------------------
# primitive terms
# ---------------------------------------------------------------------------


def gram(features: torch.Tensor, normalize: bool = False) -> torch.Tensor:
    """Channel-correlation (Gram) matrix of an activation map.

    Accepts (C, K), (C, H, W) or (N, C, H, W) and returns (C, C) or
    (N, C, C): G_ij = sum_k F_ik F_jk over spatial positions k. With
    ``normalize`` the matrix is divided by C*K.
    """
    if features.dim() == 2:
        f = features.unsqueeze(0)
    elif features.dim() == 3:
        f = features.flatten(1).unsqueeze(0)
    elif features.dim() == 4:
        f = features.flatten(2)
    else:
        raise ValueError(f"expected 2-4 dims, got {features.dim()}")
    g = torch.bmm(f, f.transpose(1, 2))
    if normalize:
        g = g / (f.shape[1] * f.shape[2])
    return g if features.dim() == 4 else g[0]


def _style_gram(features: torch.Tensor) -> torch.Tensor:
    """Gram divided by the position count: the style terms use per-position
    channel correlations, which keeps style distances resolution-independent
    without shrinking them below the other terms' working range."""
    k = features.shape[-1] * features.shape[-2]
    return gram(features) / k


def feature_loss(gen_L: torch.Tensor, ref_L: torch.Tensor, fe: FeatureExtractor) -> torch.Tensor:
    """Deep-tap activation MSE between grayscale replications of two
    lightness maps. Gradient flows only into gen_L."""
    if gen_L.shape != ref_L.shape:
        raise ValueError(f"shape mismatch {tuple(gen_L.shape)} vs {tuple(ref_L.shape)}")
    gen_feat = fe.extract(l_to_gray3(gen_L), taps=("deep",))["deep"]
    ref_feat = fe.extract(l_to_gray3(ref_L.detach()), taps=("deep",))["deep"]
    return F.mse_loss(gen_feat, ref_feat)


def style_loss(
    gen_L: torch.Tensor,
    ref_L: torch.Tensor,
    fe: FeatureExtractor,
    taps=STYLE_TAPS,
) -> torch.Tensor:
    """Sum over taps of mean squared normalized-Gram differences on the
    lightness channel. Gradient flows only into gen_L."""
    gen_taps = fe.extract(l_to_gray3(gen_L), taps=taps)
    ref_taps = fe.extract(l_to_gray3(ref_L.detach()), taps=taps)
    loss = gen_L.new_zeros(())
    for tap in taps:
        loss = loss + F.mse_loss(_style_gram(gen_taps[tap]), _style_gram(ref_taps[tap]))
    return loss


def _masked_mse(diff_sq: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return diff_sq.mean()
    mask = mask.to(diff_sq.dtype).expand_as(diff_sq)
    denom = mask.sum()
    if denom == 0:
        warnings.warn("masked loss over an all-zero mask is defined as 0")
        return diff_sq.new_zeros(())
    return (diff_sq * mask).sum() / denom


def pixel_loss_L(
    gen_L: torch.Tensor, ref_L: torch.Tensor, mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean squared lightness error over (optionally masked) pixels."""
    if gen_L.shape != ref_L.shape:
        raise ValueError(f"shape mismatch {tuple(gen_L.shape)} vs {tuple(ref_L.shape)}")
    return _masked_mse((gen_L - ref_L.detach()) ** 2, mask)


def color_loss_ab(
    gen_ab: torch.Tensor, ref_ab: torch.Tensor, mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean squared chroma error over (optionally masked) pixels."""
    if gen_ab.shape != ref_ab.shape:
        raise ValueError(f"shape mismatch {tuple(gen_ab.shape)} vs {tuple(ref_ab.shape)}")
    return _masked_mse((gen_ab - ref_ab.detach()) ** 2, mask)


def lsgan_d_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator loss: mean((real-1)^2) + mean(fake^2)."""
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores**2).mean()


def lsgan_g_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares generator loss: mean((fake-1)^2)."""
    return ((fake_scores - 1.0) ** 2).mean()


# ---------------------------------------------------------------------------
# patch cropping
# ---------------------------------------------------------------------------


def crop_patches(
    image: torch.Tensor,
    mask: SegmentationMask | np.ndarray | None,
    n: int,
    s: int,
    rng_seed: int,
    max_retries: int = 200,
) -> tuple[torch.Tensor, list[PatchPlacement]]:
    """Sample ``n`` crops of size s x s from a (C, H, W) tensor.

    Every crop overlaps the foreground mask by at least 70% (a None mask
    means anywhere). Crops are views into the input, so gradients flow
    back into it. Deterministic given the seed.
    """
    C, H, W = image.shape
    if s > H or s > W:
        raise SamplingError(f"crop size {s} exceeds image size {H}x{W}")
    mask_arr = None
    if mask is not None:
        mask_arr = mask.mask if isinstance(mask, SegmentationMask) else np.asarray(mask)
    rng = np.random.default_rng(rng_seed)
    crops, placements = [], []
    for _ in range(n):
        for attempt in range(max_retries):
            x = int(rng.integers(0, W - s + 1))
            y = int(rng.integers(0, H - s + 1))
            overlap = 1.0 if mask_arr is None else float(mask_arr[y : y + s, x : x + s].mean())
            if overlap >= MIN_PATCH_OVERLAP:
                placements.append(PatchPlacement(x, y, s, s, overlap))
                crops.append(image[:, y : y + s, x : x + s])
                break
        else:
            raise SamplingError(
                f"no {s}x{s} crop with overlap >= {MIN_PATCH_OVERLAP} in {max_retries} tries"
            )
    return torch.stack(crops), placements


_LOCAL_PATCH_TABLE = {256: 100, 128: 60}


def local_patch_size(resolution: int) -> int:
    """Default local-loss patch side: 100 at 256-px resolution, 60 at
    128-px, scaled by the 128-px ratio elsewhere."""
    if resolution in _LOCAL_PATCH_TABLE:
        return _LOCAL_PATCH_TABLE[resolution]
    return max(8, int(round(resolution * 60 / 128)))


# ---------------------------------------------------------------------------
# local texture loss
# ---------------------------------------------------------------------------


def local_texture_loss(
    gen_lab: torch.Tensor,
    texture_lab: torch.Tensor,
    mask: torch.Tensor,
    d_txt: LocalTextureDiscriminator,
    fe: FeatureExtractor,
    weights: LossWeights,
    n: int = 1,
    s: int = 60,
    rng_seed: int = 0,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Local texture loss over paired crops of the generated output and the
    reference texture.

    For each batch sample, ``n`` crops are drawn from the generated L
    channel inside the foreground mask and paired with random crops of the
    texture's L channel. The total is local_style + w_local_pixel *
    local_pixel + w_local_adv * local_adv where the adversarial term is
    mean((D_txt(PG, PT) - 1)^2). Gradient reaches only the generated L
    channel.
    """
    N = gen_lab.shape[0]
    gen_crops, tex_crops = [], []
    for i in range(N):
        gen_Ln = gen_lab[i, 0:1] / 100.0
        tex_Ln = texture_lab[i, 0:1].detach() / 100.0
        mask_i = mask[i, 0].detach().cpu().numpy()
        pg, _ = crop_patches(gen_Ln, mask_i, n, s, derive_seed(rng_seed, "gen", i))
        pt, _ = crop_patches(tex_Ln, None, n, s, derive_seed(rng_seed, "tex", i))
        gen_crops.append(pg)
        tex_crops.append(pt)
    pg = torch.cat(gen_crops)
    pt = torch.cat(tex_crops)

    l_style = style_loss(pg, pt, fe)
    l_pixel = pixel_loss_L(pg, pt)
    l_adv = lsgan_g_loss(d_txt(pg, pt.detach()))

    total = l_style + weights.local_pixel * l_pixel + weights.local_adv * l_adv
    terms = {
        "local_style": float(l_style.detach()),
        "local_pixel": float(l_pixel.detach()),
        "local_adv": float(l_adv.detach()),
    }
    return total, terms


# ---------------------------------------------------------------------------
# combined objectives
# ---------------------------------------------------------------------------


@dataclass
class LossNets:
    """Network bundle the objectives evaluate against.

    ``d_condition`` optionally carries per-batch conditioning channels
    (the sketch) for a conditional global discriminator; the training loop
    sets it before evaluating an objective.
    """

    fe: FeatureExtractor
    d_global: torch.nn.Module | None = None
    d_txt: LocalTextureDiscriminator | None = None
    d_condition: torch.Tensor | None = None

    def d_global_scores(self, lightness: torch.Tensor) -> torch.Tensor:
        if self.d_condition is not None:
            return self.d_global(torch.cat([lightness, self.d_condition], dim=1))
        return self.d_global(lightness)


def pretrain_objective(
    gen_lab: torch.Tensor,
    target_lab: torch.Tensor,
    nets: LossNets,
    weights: LossWeights,
    flags: AblationFlags = AblationFlags(),
    style_target_L: torch.Tensor | None = None,
) -> tuple[torch.Tensor, LossReport]:
    """Stage-1 combined objective against ground-truth targets.

    total = feature + w_adv * adv + w_style * style + w_pixel * pixel
    + w_color * color. The style reference defaults to the target's
    lightness; pass ``style_target_L`` (Lab-range L) to override.
    """
    gen_Ln, gen_abn = gen_lab[:, 0:1] / 100.0, gen_lab[:, 1:3] / 128.0
    tgt_Ln, tgt_abn = target_lab[:, 0:1] / 100.0, target_lab[:, 1:3] / 128.0

    report = LossReport()
    total = gen_lab.new_zeros(())

    # one extractor pass per image covers both the feature and style terms
    share_style_taps = not flags.disable_style and style_target_L is None
    taps = ("mid", "deep") if share_style_taps else ("deep",)
    gen_taps = nets.fe.extract(l_to_gray3(gen_Ln), taps=taps)
    tgt_taps = nets.fe.extract(l_to_gray3(tgt_Ln.detach()), taps=taps)

    l_feature = F.mse_loss(gen_taps["deep"], tgt_taps["deep"])
    report.feature = float(l_feature.detach())
    total = total + l_feature

    if not flags.disable_adversarial:
        if nets.d_global is None:
            raise ValueError("adversarial term enabled but no global discriminator given")
        l_adv = lsgan_g_loss(nets.d_global_scores(gen_Ln))
        report.adv = float(l_adv.detach())
        total = total + weights.adv * l_adv

    if not flags.disable_style:
        if share_style_taps:
            l_style = gen_lab.new_zeros(())
            for tap in ("mid", "deep"):
                l_style = l_style + F.mse_loss(
                    _style_gram(gen_taps[tap]), _style_gram(tgt_taps[tap])
                )
        else:
            l_style = style_loss(gen_Ln, style_target_L / 100.0, nets.fe)
        report.style = float(l_style.detach())
        total = total + weights.style * l_style

    l_pixel = pixel_loss_L(gen_Ln, tgt_Ln)
    report.pixel = float(l_pixel.detach())
    total = total + weights.pixel * l_pixel

    l_color = color_loss_ab(gen_abn, tgt_abn)
    report.color = float(l_color.detach())
    total = total + weights.color * l_color

    report.total = float(total.detach())
    return total, report


def finetune_objective(
    gen_lab: torch.Tensor,
    texture_lab: torch.Tensor,
    mask: torch.Tensor,
    nets: LossNets,
    weights: LossWeights,
    flags: AblationFlags = AblationFlags(),
    n: int = 1,
    s: int = 60,
    rng_seed: int = 0,
    feature_target_lab: torch.Tensor | None = None,
) -> tuple[torch.Tensor, LossReport]:
    """Stage-2 combined objective against an external texture.

    total = feature + w_adv * adv + w_pixel * pixel' + w_color * color'
    + local texture loss; there is no global style term. The pixel and
    color terms compare against the whole input texture restricted to the
    foreground mask. The feature term keeps comparing against the photo
    the input channels were derived from (``feature_target_lab``); when
    none is supplied it falls back to the texture.
    """
    gen_Ln, gen_abn = gen_lab[:, 0:1] / 100.0, gen_lab[:, 1:3] / 128.0
    tex_Ln, tex_abn = texture_lab[:, 0:1] / 100.0, texture_lab[:, 1:3] / 128.0

    report = LossReport()
    total = gen_lab.new_zeros(())

    feat_ref = feature_target_lab if feature_target_lab is not None else texture_lab
    l_feature = feature_loss(gen_Ln, feat_ref[:, 0:1] / 100.0, nets.fe)
    report.feature = float(l_feature.detach())
    total = total + l_feature

    if not flags.disable_adversarial:
        if nets.d_global is None:
            raise ValueError("adversarial term enabled but no global discriminator given")
        l_adv = lsgan_g_loss(nets.d_global_scores(gen_Ln))
        report.adv = float(l_adv.detach())
        total = total + weights.adv * l_adv

    l_pixel = pixel_loss_L(gen_Ln, tex_Ln, mask)
    report.pixel = float(l_pixel.detach())
    total = total + weights.pixel * l_pixel

    l_color = color_loss_ab(gen_abn, tex_abn, mask)
    report.color = float(l_color.detach())
    total = total + weights.color * l_color

    if not flags.disable_local_texture:
        if nets.d_txt is None:
            raise ValueError("local texture term enabled but no local discriminator given")
        l_local, terms = local_texture_loss(
            gen_lab, texture_lab, mask, nets.d_txt, nets.fe, weights, n, s, rng_seed
        )
        report.local_style = terms["local_style"]
        report.local_pixel = terms["local_pixel"]
        report.local_adv = terms["local_adv"]
        total = total + l_local

    report.total = float(total.detach())
    return total, report
