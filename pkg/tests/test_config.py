import pytest

from tgan.config import ConfigError, TrainConfig, config_from_dict, load_config, save_config


def test_yaml_roundtrip(tmp_path):
    cfg = TrainConfig(resolution=64, iterations=10, out_dir="x")
    path = tmp_path / "c.yaml"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg


def test_partial_nested_override(tmp_path):
    (tmp_path / "c.yaml").write_text(
        "stage: pretrain\nresolution: 64\nweights:\n  color: 42.0\n"
    )
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.weights.color == 42.0
    assert cfg.weights.pixel == 10.0  # untouched default


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key.*momentum"):
        config_from_dict({"momentum": 0.9})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="weights"):
        config_from_dict({"weights": {"w_total": 1.0}})


def test_finetune_requires_init_checkpoint():
    with pytest.raises(ConfigError, match="init_checkpoint"):
        config_from_dict({"stage": "finetune", "batch_size": 4})


def test_finetune_requires_batch_of_two():
    with pytest.raises(ConfigError, match="batch_size"):
        config_from_dict({"stage": "finetune", "init_checkpoint": "x.ckpt", "batch_size": 1})


def test_resolution_must_be_divisible_by_eight():
    with pytest.raises(ConfigError, match="divisible"):
        config_from_dict({"resolution": 65})


def test_negative_learning_rate_rejected():
    with pytest.raises(ConfigError, match="learning rate"):
        config_from_dict({"learning_rates": {"generator": -1.0}})


def test_bad_mixing_rejected():
    with pytest.raises(ConfigError, match="mixing"):
        config_from_dict({"mixing": "coin_flip"})


def test_bad_stage_rejected():
    with pytest.raises(ConfigError, match="stage"):
        config_from_dict({"stage": "warmup"})


def test_local_patch_size_defaults_by_resolution():
    assert TrainConfig(resolution=256).local_patch_size() == 100
    assert TrainConfig(resolution=128).local_patch_size() == 60
    assert TrainConfig(resolution=64).local_patch_size() == 30
    cfg = TrainConfig(resolution=128)
    cfg.local_patch.size = 48
    assert cfg.local_patch_size() == 48
