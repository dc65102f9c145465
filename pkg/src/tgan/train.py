"""Two-stage training: ground-truth pre-training and external-texture
fine-tuning with deterministic 50/50 iteration mixing.

All stochastic choices (batch composition, placements, crops, pair
shuffles) derive from ``derive_seed(config.seed, ..., iteration)``, so runs
replay bit-for-bit and a resumed run continues the exact metrics stream of
an uninterrupted one (the wall-clock field excepted).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch

from . import checkpoint as ckpt
from .config import ConfigError, TrainConfig, config_from_dict, save_config
from .datagen import (
    ExampleConfig,
    PreparedPhoto,
    SegmentationMask,
    TextureExample,
    assemble_example,
    derive_seed,
    find_provided_mask,
    ingest_texture_dir,
    list_photos,
    load_image,
    prepare_photo,
    sample_patch_placement,
    PlacementConfig,
)
from .losses import (
    LossNets,
    LossReport,
    crop_patches,
    finetune_objective,
    lsgan_d_loss,
    pretrain_objective,
)
from .nets import (
    Generator,
    GeneratorConfig,
    GlobalDiscriminator,
    LocalTextureDiscriminator,
    build_feature_extractor,
)

logger = logging.getLogger(__name__)


class TrainingError(Exception):
    pass


def mixing_schedule(mixing: str, iteration: int, seed: int = 0) -> str:
    """Decide the kind of a fine-tuning iteration (0-based).

    'alternate' interleaves texture and ground-truth iterations strictly,
    so any even-length window is exactly half ground truth. 'bernoulli'
    flips a seeded fair coin per iteration.
    """
    if mixing == "alternate":
        return "texture" if iteration % 2 == 0 else "ground_truth"
    if mixing == "bernoulli":
        rng = np.random.default_rng(derive_seed(seed, "mix", iteration))
        return "texture" if rng.random() < 0.5 else "ground_truth"
    raise ConfigError(f"unknown mixing mode {mixing!r}")


# ---------------------------------------------------------------------------
# data pools
# ---------------------------------------------------------------------------


class PhotoPool:
    """Loads the photo collection once and assembles fresh, deterministic
    examples per iteration."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.example_cfg = ExampleConfig(
            sketch_method=config.data.sketch_method,
            mask_mode=config.data.mask_mode,
            tau_white=config.data.tau_white,
            patches=config.data.patches,
        )
        root = Path(config.data.root)
        self.prepared: list[PreparedPhoto] = []
        for path in list_photos(root):
            arr = load_image(path)
            if arr.shape[:2] != (config.resolution, config.resolution):
                arr = np.clip(
                    cv2.resize(
                        arr,
                        (config.resolution, config.resolution),
                        interpolation=cv2.INTER_AREA,
                    ),
                    0.0,
                    1.0,
                )
            self.prepared.append(
                prepare_photo(
                    arr,
                    self.example_cfg,
                    provided_mask=find_provided_mask(root, path),
                    source_id=path.name,
                )
            )
        if not self.prepared:
            raise TrainingError(f"no usable photos under {root}")

    def __len__(self) -> int:
        return len(self.prepared)

    def batch(self, iteration: int):
        """Deterministic batch of (inputs, targets, masks, ids) tensors."""
        cfg = self.config
        rng = np.random.default_rng(derive_seed(cfg.seed, "batch", iteration))
        idx = rng.choice(len(self.prepared), size=cfg.batch_size, replace=len(self.prepared) < cfg.batch_size)
        inputs, targets, masks, ids = [], [], [], []
        for j in idx:
            prep = self.prepared[int(j)]
            ex = assemble_example(
                prep, derive_seed(cfg.seed, prep.source_id, iteration), self.example_cfg
            )
            inputs.append(ex.input.as_array())
            targets.append(ex.target.as_array().transpose(2, 0, 1).astype(np.float32))
            masks.append(ex.mask.mask[None].astype(np.float32))
            ids.append(ex.source_id)
        return (
            torch.from_numpy(np.stack(inputs)),
            torch.from_numpy(np.stack(targets)),
            torch.from_numpy(np.stack(masks)),
            ids,
        )


class TexturePool:
    """Fixed pool of external texture crops with deterministic batching."""

    def __init__(self, config: TrainConfig):
        textures_dir = Path(config.data.root) / "textures"
        if not textures_dir.is_dir():
            raise TrainingError(f"fine-tuning needs a texture pool at {textures_dir}")
        self.examples: list[TextureExample] = ingest_texture_dir(
            textures_dir,
            resolution=config.resolution,
            crops_per_image=max(1, 50 // max(1, config.resolution // 64)),
            seed=config.seed,
        )
        self.config = config
        self._cache: dict[int, torch.Tensor] = {}

    def __len__(self) -> int:
        return len(self.examples)

    def _tensor(self, index: int) -> torch.Tensor:
        if index not in self._cache:
            arr = self.examples[index].texture.as_array().transpose(2, 0, 1)
            self._cache[index] = torch.from_numpy(arr.astype(np.float32))
        return self._cache[index]

    def batch(self, iteration: int):
        cfg = self.config
        rng = np.random.default_rng(derive_seed(cfg.seed, "texbatch", iteration))
        idx = rng.choice(len(self.examples), size=cfg.batch_size, replace=len(self.examples) < cfg.batch_size)
        labs = torch.stack([self._tensor(int(j)) for j in idx])
        ids = [self.examples[int(j)].source_id for j in idx]
        return labs, ids


# ---------------------------------------------------------------------------
# training state
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    config: TrainConfig
    generator: Generator
    d_global: GlobalDiscriminator
    d_txt: LocalTextureDiscriminator
    opt_g: torch.optim.Adam
    opt_dg: torch.optim.Adam
    opt_dt: torch.optim.Adam
    nets: LossNets
    iteration: int = 0

    @classmethod
    def create(cls, config: TrainConfig) -> "TrainState":
        torch.manual_seed(config.seed)
        gen = Generator(
            GeneratorConfig(
                base_width=config.model.generator_width,
                n_residual=config.model.n_residual,
                skip_connections=config.model.skip_connections,
            )
        )
        d_global = GlobalDiscriminator(
            base_width=config.model.d_global_width,
            n_blocks=config.model.d_global_blocks,
            in_channels=2 if config.options.d_global_conditional else 1,
        )
        d_txt = LocalTextureDiscriminator(base_width=config.model.d_local_width)
        fe_kwargs = (
            {"weights_path": config.model.vgg_weights}
            if config.model.feature_extractor == "vgg19"
            else {}
        )
        fe = build_feature_extractor(config.model.feature_extractor, **fe_kwargs)
        lr = config.learning_rates
        betas = (0.5, 0.999)
        return cls(
            config=config,
            generator=gen,
            d_global=d_global,
            d_txt=d_txt,
            opt_g=torch.optim.Adam(gen.parameters(), lr=lr.generator, betas=betas),
            opt_dg=torch.optim.Adam(d_global.parameters(), lr=lr.d_global, betas=betas),
            opt_dt=torch.optim.Adam(d_txt.parameters(), lr=lr.d_local, betas=betas),
            nets=LossNets(fe=fe, d_global=d_global, d_txt=d_txt),
        )

    def payload(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "iteration": self.iteration,
            "generator": self.generator.state_dict(),
            "d_global": self.d_global.state_dict(),
            "d_txt": self.d_txt.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_dg": self.opt_dg.state_dict(),
            "opt_dt": self.opt_dt.state_dict(),
            "torch_rng": torch.get_rng_state(),
        }

    def save(self, path: str | Path) -> str:
        return ckpt.save(path, self.payload())

    @classmethod
    def restore(cls, path: str | Path, config: TrainConfig | None = None) -> "TrainState":
        payload = ckpt.load(path)
        config = config or config_from_dict(payload["config"])
        state = cls.create(config)
        state.generator.load_state_dict(payload["generator"])
        state.d_global.load_state_dict(payload["d_global"])
        state.d_txt.load_state_dict(payload["d_txt"])
        state.opt_g.load_state_dict(payload["opt_g"])
        state.opt_dg.load_state_dict(payload["opt_dg"])
        state.opt_dt.load_state_dict(payload["opt_dt"])
        state.iteration = payload["iteration"]
        torch.set_rng_state(payload["torch_rng"].to(torch.uint8))
        return state

    def load_generator_init(self, path: str | Path) -> None:
        """Seed fine-tuning from a stage-1 checkpoint (generator and global
        discriminator weights; optimizers start fresh)."""
        payload = ckpt.load(path)
        self.generator.load_state_dict(payload["generator"])
        self.d_global.load_state_dict(payload["d_global"])


def _check_finite(total: torch.Tensor, iteration: int, ids) -> None:
    if not torch.isfinite(total):
        raise TrainingError(
            f"non-finite loss at iteration {iteration}; offending batch: {ids}"
        )


def _d_accuracy(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> float:
    correct = (real_scores > 0.5).float().mean() + (fake_scores < 0.5).float().mean()
    return float(correct / 2.0)


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------


def pretrain_step(state: TrainState, batch) -> tuple[TrainState, LossReport, dict]:
    """One discriminator update followed by one generator update on a
    ground-truth batch; bumps the iteration counter."""
    cfg = state.config
    inputs, targets, masks, ids = batch
    fake = state.generator(inputs)
    fake_Ln = fake[:, 0:1] / 100.0
    real_Ln = targets[:, 0:1] / 100.0
    state.nets.d_condition = inputs[:, 0:1] if cfg.options.d_global_conditional else None

    extras = {"kind": "ground_truth", "d_global_loss": None, "d_global_acc": None,
              "d_txt_loss": None, "d_txt_acc": None}

    if not cfg.ablation.disable_adversarial:
        real_scores = state.nets.d_global_scores(real_Ln)
        fake_scores = state.nets.d_global_scores(fake_Ln.detach())
        d_loss = lsgan_d_loss(real_scores, fake_scores)
        state.opt_dg.zero_grad()
        d_loss.backward()
        state.opt_dg.step()
        extras["d_global_loss"] = float(d_loss.detach())
        extras["d_global_acc"] = _d_accuracy(real_scores.detach(), fake_scores.detach())

    style_target = None
    if cfg.options.style_reference == "texture_patch":
        style_target = inputs[:, 1:2] * 100.0  # texture intensity channel as L

    total, report = pretrain_objective(
        fake, targets, state.nets, cfg.weights, cfg.ablation, style_target_L=style_target
    )
    _check_finite(total, state.iteration, ids)
    state.opt_g.zero_grad()
    total.backward()
    state.opt_g.step()

    state.iteration += 1
    return state, report, extras


def _paste_texture_crop(
    inputs: torch.Tensor,
    masks: torch.Tensor,
    textures: torch.Tensor,
    seed: int,
    iteration: int,
    placement_cfg: PlacementConfig,
) -> torch.Tensor:
    """Replace the texture channels of a ground-truth input stack with a
    crop of the external texture pasted over the sketch foreground."""
    out = inputs.clone()
    N, _, H, W = inputs.shape
    for i in range(N):
        mask = SegmentationMask((masks[i, 0].numpy() > 0.5).astype(np.uint8))
        p = sample_patch_placement(
            mask, derive_seed(seed, "ft-place", iteration, i), placement_cfg
        )
        rng = np.random.default_rng(derive_seed(seed, "ft-crop", iteration, i))
        ty = int(rng.integers(0, H - p.h + 1))
        tx = int(rng.integers(0, W - p.w + 1))
        crop_Ln = textures[i, 0, ty : ty + p.h, tx : tx + p.w] / 100.0
        ys, xs = p.slices()
        out[i, 1, ys, xs] = crop_Ln
        out[i, 2] = 0.0
        out[i, 2, ys, xs] = 1.0
    return out


def _update_d_txt(
    state: TrainState, fake: torch.Tensor, textures: torch.Tensor, masks: torch.Tensor,
    s: int, iteration: int,
) -> tuple[float, float]:
    """Train the local discriminator on same-texture positives and
    cross-texture negatives; returns (loss, pair accuracy)."""
    cfg = state.config
    N = fake.shape[0]
    pos_g, pos_t, neg_g, neg_t = [], [], [], []
    for i in range(N):
        j = (i + 1) % N  # a different texture from the batch
        tex_i = textures[i, 0:1] / 100.0
        tex_j = textures[j, 0:1] / 100.0
        fake_Ln = fake[i, 0:1].detach() / 100.0
        mask_i = (masks[i, 0].numpy() > 0.5).astype(np.uint8)
        base = derive_seed(cfg.seed, "dtxt", iteration, i)
        a, _ = crop_patches(tex_i, None, 1, s, derive_seed(base, "pos-a"))
        b, _ = crop_patches(tex_i, None, 1, s, derive_seed(base, "pos-b"))
        pos_g.append(a)
        pos_t.append(b)
        # generated crop paired with a different texture
        ga, _ = crop_patches(fake_Ln, mask_i, 1, s, derive_seed(base, "neg-gen"))
        gb, _ = crop_patches(tex_j, None, 1, s, derive_seed(base, "neg-tex"))
        neg_g.append(ga)
        neg_t.append(gb)
        # two different reference textures
        ra, _ = crop_patches(tex_i, None, 1, s, derive_seed(base, "neg-ref-a"))
        rb, _ = crop_patches(tex_j, None, 1, s, derive_seed(base, "neg-ref-b"))
        neg_g.append(ra)
        neg_t.append(rb)
    pos_scores = state.d_txt(torch.cat(pos_g), torch.cat(pos_t))
    neg_scores = state.d_txt(torch.cat(neg_g), torch.cat(neg_t))
    d_loss = lsgan_d_loss(pos_scores, neg_scores)
    state.opt_dt.zero_grad()
    d_loss.backward()
    state.opt_dt.step()
    return float(d_loss.detach()), _d_accuracy(pos_scores.detach(), neg_scores.detach())


def finetune_step(state: TrainState, gt_batch, texture_batch) -> tuple[TrainState, LossReport, dict]:
    """One fine-tuning iteration: either a mixed-in ground-truth step
    (identical to pretraining) or an external-texture step per the mixing
    schedule."""
    cfg = state.config
    kind = mixing_schedule(cfg.mixing, state.iteration, cfg.seed)
    if kind == "ground_truth":
        return pretrain_step(state, gt_batch)

    inputs, targets, masks, ids = gt_batch
    textures, tex_ids = texture_batch
    s = cfg.local_patch_size()
    placement_cfg = PlacementConfig.for_resolution(cfg.resolution)

    ft_inputs = _paste_texture_crop(
        inputs, masks, textures, cfg.seed, state.iteration, placement_cfg
    )
    fake = state.generator(ft_inputs)
    fake_Ln = fake[:, 0:1] / 100.0
    state.nets.d_condition = ft_inputs[:, 0:1] if cfg.options.d_global_conditional else None

    extras = {"kind": "texture", "d_global_loss": None, "d_global_acc": None,
              "d_txt_loss": None, "d_txt_acc": None}

    if not cfg.ablation.disable_adversarial and cfg.options.update_d_global_on_texture_iters:
        real_scores = state.nets.d_global_scores(targets[:, 0:1] / 100.0)
        fake_scores = state.nets.d_global_scores(fake_Ln.detach())
        d_loss = lsgan_d_loss(real_scores, fake_scores)
        state.opt_dg.zero_grad()
        d_loss.backward()
        state.opt_dg.step()
        extras["d_global_loss"] = float(d_loss.detach())
        extras["d_global_acc"] = _d_accuracy(real_scores.detach(), fake_scores.detach())

    if not cfg.ablation.disable_local_texture:
        dt_loss, dt_acc = _update_d_txt(state, fake, textures, masks, s, state.iteration)
        extras["d_txt_loss"] = dt_loss
        extras["d_txt_acc"] = dt_acc

    total, report = finetune_objective(
        fake,
        textures,
        masks,
        state.nets,
        cfg.weights,
        cfg.ablation,
        n=cfg.local_patch.count,
        s=s,
        rng_seed=derive_seed(cfg.seed, "local", state.iteration),
        feature_target_lab=targets,
    )
    _check_finite(total, state.iteration, list(ids) + list(tex_ids))
    state.opt_g.zero_grad()
    total.backward()
    state.opt_g.step()

    state.iteration += 1
    return state, report, extras


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------


def _truncate_metrics(path: Path, max_iteration: int) -> None:
    if not path.exists():
        return
    kept = [
        line
        for line in path.read_text().splitlines()
        if line.strip() and json.loads(line)["iteration"] <= max_iteration
    ]
    path.write_text("".join(l + "\n" for l in kept))


def run(config: TrainConfig, resume: str | Path | None = None) -> Path:
    """Train to config.iterations, writing metrics and checkpoints.

    Returns the final checkpoint path. ``resume`` continues from a saved
    checkpoint, reproducing the uninterrupted metrics stream.
    """
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / "config.yaml")
    metrics_path = out_dir / "metrics.jsonl"

    if resume is not None:
        state = TrainState.restore(resume, config)
        _truncate_metrics(metrics_path, state.iteration)
        logger.info("resumed from %s at iteration %d", resume, state.iteration)
    else:
        state = TrainState.create(config)
        if config.stage == "finetune":
            state.load_generator_init(config.init_checkpoint)
        state.save(out_dir / "checkpoint-000000.ckpt")
        metrics_path.write_text("")

    if config.iterations == 0:
        return out_dir / "checkpoint-000000.ckpt"

    photos = PhotoPool(config)
    textures = TexturePool(config) if config.stage == "finetune" else None

    with open(metrics_path, "a") as metrics:
        while state.iteration < config.iterations:
            t0 = time.perf_counter()
            i = state.iteration
            gt_batch = photos.batch(i)
            if config.stage == "pretrain":
                state, report, extras = pretrain_step(state, gt_batch)
            else:
                state, report, extras = finetune_step(state, gt_batch, textures.batch(i))
            line = {
                "iteration": state.iteration,
                "kind": extras["kind"],
                **report.as_dict(),
                "d_global_loss": extras["d_global_loss"],
                "d_global_acc": extras["d_global_acc"],
                "d_txt_loss": extras["d_txt_loss"],
                "d_txt_acc": extras["d_txt_acc"],
                "seconds": round(time.perf_counter() - t0, 4),
            }
            metrics.write(json.dumps(line) + "\n")
            metrics.flush()
            if state.iteration % config.checkpoint_every == 0:
                state.save(out_dir / f"checkpoint-{state.iteration:06d}.ckpt")

    final_path = out_dir / "checkpoint-final.ckpt"
    state.save(final_path)
    return final_path
