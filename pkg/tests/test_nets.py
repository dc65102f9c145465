import hashlib
import os
from pathlib import Path

import numpy as np
import pytest
import torch

from tgan.nets import (
    Generator,
    GeneratorConfig,
    GlobalDiscriminator,
    LocalTextureDiscriminator,
    TinyFeatureExtractor,
    Vgg19FeatureExtractor,
    build_feature_extractor,
    extract_features,
)


def small_gen():
    return Generator(GeneratorConfig(base_width=8, n_residual=2))


# --- generator ---


def test_generator_zero_input_finite_output():
    g = small_gen()
    out = g(torch.zeros(2, 5, 32, 32))
    assert out.shape == (2, 3, 32, 32)
    assert torch.isfinite(out).all()


def test_generator_output_satisfies_lab_ranges():
    g = small_gen()
    x = torch.randn(2, 5, 32, 32) * 5
    out = g(x)
    assert out[:, 0].min() >= 0.0 and out[:, 0].max() <= 100.0
    assert out[:, 1:].min() >= -128.0 and out[:, 1:].max() <= 128.0


def test_generator_deterministic_in_inference():
    g = small_gen().eval()
    x = torch.randn(1, 5, 32, 32)
    with torch.no_grad():
        assert torch.equal(g(x), g(x))


def test_generator_rejects_wrong_channels():
    with pytest.raises(ValueError, match="expected"):
        small_gen()(torch.zeros(1, 4, 32, 32))


def test_generator_rejects_odd_resolution():
    with pytest.raises(ValueError, match="divisible by 8"):
        small_gen()(torch.zeros(1, 5, 30, 30))


def test_generator_differentiable_wrt_parameters():
    g = small_gen()
    out = g(torch.rand(1, 5, 16, 16))
    out.mean().backward()
    grads = [p.grad for p in g.parameters() if p.grad is not None]
    assert grads and any(float(t.abs().sum()) > 0 for t in grads)


def test_generator_without_skips_still_works():
    g = Generator(GeneratorConfig(base_width=8, n_residual=1, skip_connections=False))
    assert g(torch.zeros(1, 5, 32, 32)).shape == (1, 3, 32, 32)


# --- global discriminator ---


def test_global_disc_scores_deterministic():
    d = GlobalDiscriminator(base_width=8).eval()
    x = torch.rand(2, 1, 64, 64)
    with torch.no_grad():
        assert torch.equal(d(x), d(x))


def test_global_disc_rejects_color_input_by_type():
    d = GlobalDiscriminator(base_width=8)
    with pytest.raises(ValueError, match=r"\(N, 1, H, W\)"):
        d(torch.rand(1, 3, 64, 64))


def test_global_disc_grid_matches_stride_arithmetic():
    # independent recomputation: n_blocks k=4 s=2 p=1 conv blocks
    def conv_out(n):
        return (n + 2 * 1 - 4) // 2 + 1

    for size, blocks in ((64, 4), (128, 4), (64, 3), (64, 2)):
        h = size
        for _ in range(blocks):
            h = conv_out(h)
        d = GlobalDiscriminator(base_width=8, n_blocks=blocks)
        scores = d(torch.rand(1, 1, size, size))
        assert scores.shape == (1, 1, h, h)
        assert d.score_grid_size(size, size) == (h, h)


# --- local texture discriminator ---


def test_local_disc_untrained_score_is_finite():
    d = LocalTextureDiscriminator(base_width=8)
    s = d(torch.rand(3, 1, 24, 24), torch.rand(3, 1, 24, 24))
    assert s.shape == (3,)
    assert torch.isfinite(s).all()


def test_local_disc_rejects_size_mismatch():
    d = LocalTextureDiscriminator(base_width=8)
    with pytest.raises(ValueError, match="pair sizes differ"):
        d(torch.rand(1, 1, 24, 24), torch.rand(1, 1, 16, 16))


def test_local_disc_is_order_sensitive_pair():
    # the pair is ordered (generated, reference): swapping channels is a
    # different input, so scores may differ
    torch.manual_seed(0)
    d = LocalTextureDiscriminator(base_width=8).eval()
    a, b = torch.rand(1, 1, 16, 16), torch.rand(1, 1, 16, 16)
    with torch.no_grad():
        assert d(a, b).shape == (1,)
        assert d(b, a).shape == (1,)


def test_local_disc_handles_multiple_patch_sizes():
    d = LocalTextureDiscriminator(base_width=8)
    for s in (16, 24, 60):
        assert d(torch.rand(2, 1, s, s), torch.rand(2, 1, s, s)).shape == (2,)


# --- feature extractors ---


def test_tiny_extractor_constant_input_gives_constant_maps():
    fe = TinyFeatureExtractor()
    taps = fe.extract(torch.full((1, 3, 32, 32), 0.5), taps=("mid", "deep"))
    for t in taps.values():
        # constant per channel away from padding effects: interior only
        interior = t[..., 2:-2, 2:-2].flatten(2)
        assert float((interior.amax(-1) - interior.amin(-1)).max()) < 1e-5
        assert torch.isfinite(t).all()


def test_tiny_extractor_tap_channel_counts():
    fe = TinyFeatureExtractor(mid_channels=6, deep_channels=4)
    taps = fe.extract(torch.rand(1, 3, 16, 16), taps=("mid", "deep"))
    assert taps["mid"].shape[1] == fe.tap_channels["mid"] == 6
    assert taps["deep"].shape[1] == fe.tap_channels["deep"] == 4


def test_tiny_extractor_unknown_tap_errors():
    fe = TinyFeatureExtractor()
    with pytest.raises(ValueError, match="unknown taps"):
        extract_features(fe, torch.rand(1, 3, 8, 8), taps=("relu9_9",))


def test_tiny_extractor_is_frozen_and_reproducible():
    fe1, fe2 = TinyFeatureExtractor(seed=11), TinyFeatureExtractor(seed=11)
    for p1, p2 in zip(fe1.parameters(), fe2.parameters()):
        assert torch.equal(p1, p2)
        assert not p1.requires_grad


def test_build_feature_extractor_kinds():
    assert isinstance(build_feature_extractor("tiny"), TinyFeatureExtractor)
    with pytest.raises(ValueError):
        build_feature_extractor("resnet")


_VGG_WEIGHTS = os.environ.get("TGAN_VGG19_WEIGHTS", "")


@pytest.mark.skipif(
    not (_VGG_WEIGHTS and Path(_VGG_WEIGHTS).exists()),
    reason="pretrained VGG-19 weights file not available (set TGAN_VGG19_WEIGHTS)",
)
def test_vgg19_activation_checksum_matches_recorded_golden(tmp_path):
    # record-once oracle: the first run against the reference weights writes
    # the golden checksum next to the weights file; later runs must match it
    fe = Vgg19FeatureExtractor(_VGG_WEIGHTS)
    rng = np.random.default_rng(0)
    img = torch.from_numpy(rng.random((1, 3, 64, 64)).astype(np.float32))
    taps = fe.extract(img, taps=("mid", "deep"))
    digest = hashlib.sha256(
        np.concatenate([taps["mid"].numpy().ravel(), taps["deep"].numpy().ravel()])
        .astype(np.float32)
        .tobytes()
    ).hexdigest()
    golden_path = Path(_VGG_WEIGHTS).with_suffix(".golden")
    if golden_path.exists():
        assert digest == golden_path.read_text().strip()
    else:
        golden_path.write_text(digest)
    assert fe.tap_channels == {"mid": 256, "deep": 512}
