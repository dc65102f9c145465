"""Training configuration: nested dataclasses mirrored exactly by the YAML
config file. Unknown keys are errors."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .losses import AblationFlags, LossWeights


class ConfigError(Exception):
    pass


@dataclass
class LearningRates:
    generator: float = 2.0e-4
    d_global: float = 2.0e-4
    d_local: float = 2.0e-4


@dataclass
class DataConfig:
    root: str = ""
    sketch_method: str = "mask_canny"
    mask_mode: str = "white_background"
    tau_white: float = 0.95
    patches: int | str = 1


@dataclass
class ModelConfig:
    generator_width: int = 32
    d_global_width: int = 32
    d_global_blocks: int = 4  # shrink at low resolutions to keep patch scores local
    d_local_width: int = 32
    skip_connections: bool = True
    n_residual: int = 5
    feature_extractor: str = "tiny"  # tiny | vgg19
    vgg_weights: str | None = None


@dataclass
class LocalPatchConfig:
    count: int = 1
    size: int | None = None  # None resolves to the resolution-derived default


@dataclass
class OptionsConfig:
    style_reference: str = "ground_truth"  # ground_truth | texture_patch
    update_d_global_on_texture_iters: bool = True
    d_global_conditional: bool = False


@dataclass
class TrainConfig:
    stage: str = "pretrain"  # pretrain | finetune
    resolution: int = 128
    batch_size: int = 8
    iterations: int = 1000
    seed: int = 0
    checkpoint_every: int = 500
    mixing: str = "alternate"  # alternate | bernoulli
    out_dir: str = "runs/default"
    init_checkpoint: str | None = None  # stage-1 checkpoint for fine-tuning
    learning_rates: LearningRates = field(default_factory=LearningRates)
    weights: LossWeights = field(default_factory=LossWeights)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    local_patch: LocalPatchConfig = field(default_factory=LocalPatchConfig)
    options: OptionsConfig = field(default_factory=OptionsConfig)

    def validate(self) -> "TrainConfig":
        if self.stage not in ("pretrain", "finetune"):
            raise ConfigError(f"stage must be pretrain or finetune, got {self.stage!r}")
        for name in ("resolution", "batch_size", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.resolution % 8:
            raise ConfigError("resolution must be divisible by 8")
        if self.mixing not in ("alternate", "bernoulli"):
            raise ConfigError(f"mixing must be alternate or bernoulli, got {self.mixing!r}")
        for name in ("generator", "d_global", "d_local"):
            if getattr(self.learning_rates, name) < 0:
                raise ConfigError(f"learning rate {name} must be nonnegative")
        if self.stage == "finetune":
            if not self.init_checkpoint:
                raise ConfigError("finetune requires init_checkpoint (stage-1 checkpoint)")
            if self.batch_size < 2:
                raise ConfigError(
                    "finetune requires batch_size >= 2 (negative texture pairs "
                    "are drawn across the batch)"
                )
        if self.options.style_reference not in ("ground_truth", "texture_patch"):
            raise ConfigError(
                f"style_reference must be ground_truth or texture_patch, "
                f"got {self.options.style_reference!r}"
            )
        return self

    def local_patch_size(self) -> int:
        from .losses import local_patch_size

        return self.local_patch.size or local_patch_size(self.resolution)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _from_dict(cls, values: dict, path: str = ""):
    if not isinstance(values, dict):
        raise ConfigError(f"expected a mapping at {path or '<root>'}, got {type(values).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(
            f"unknown config key(s) {sorted(unknown)} at {path or '<root>'}; "
            f"known keys: {sorted(known)}"
        )
    kwargs = {}
    for name, val in values.items():
        f = known[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.default_factory, type) and dataclasses.is_dataclass(f.default_factory)
        ):
            kwargs[name] = _from_dict(f.default_factory, val, f"{path}{name}.")
        else:
            kwargs[name] = val
    return cls(**kwargs)


def config_from_dict(values: dict, validate: bool = True) -> TrainConfig:
    config = _from_dict(TrainConfig, values)
    return config.validate() if validate else config


def load_config(path: str | Path, validate: bool = True) -> TrainConfig:
    """Parse a YAML config file into a validated TrainConfig."""
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    return config_from_dict(raw, validate=validate)


def save_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
