import pickle

import pytest
import torch

from tgan import checkpoint as ckpt


def payload():
    torch.manual_seed(0)
    lin = torch.nn.Linear(4, 2)
    opt = torch.optim.Adam(lin.parameters(), lr=1e-3)
    lin(torch.rand(3, 4)).sum().backward()
    opt.step()
    return {
        "config": {"stage": "pretrain", "resolution": 64},
        "iteration": 7,
        "generator": lin.state_dict(),
        "opt": opt.state_dict(),
        "torch_rng": torch.get_rng_state(),
    }


def test_save_load_roundtrip(tmp_path):
    p = payload()
    path = tmp_path / "c.ckpt"
    cid = ckpt.save(path, p)
    assert cid == ckpt.content_id(path)
    loaded = ckpt.load(path)
    assert loaded["iteration"] == 7
    assert torch.equal(loaded["generator"]["weight"], p["generator"]["weight"])
    assert loaded["generator"]["weight"].dtype == torch.float32


def test_save_load_save_is_byte_identical(tmp_path):
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    ckpt.save(p1, payload())
    ckpt.save(p2, ckpt.load(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_version_mismatch_rejected(tmp_path):
    bad = pickle.dumps({"magic": "tgan-checkpoint", "version": 0, "payload": {}}, protocol=4)
    path = tmp_path / "old.ckpt"
    path.write_bytes(bad)
    with pytest.raises(ckpt.CheckpointError, match="version"):
        ckpt.load(path)


def test_foreign_file_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(pickle.dumps({"something": 1}))
    with pytest.raises(ckpt.CheckpointError, match="not a recognized"):
        ckpt.load(path)


def test_optimizer_state_survives_roundtrip(tmp_path):
    p = payload()
    path = tmp_path / "c.ckpt"
    ckpt.save(path, p)
    loaded = ckpt.load(path)
    lin = torch.nn.Linear(4, 2)
    opt = torch.optim.Adam(lin.parameters(), lr=1e-3)
    lin.load_state_dict(loaded["generator"])
    opt.load_state_dict(loaded["opt"])
    step = list(opt.state_dict()["state"].values())[0]["step"]
    assert float(step) == 1.0
