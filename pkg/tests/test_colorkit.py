import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tgan.colorkit import LabImage, l_to_gray3, lab_to_rgb, rgb_to_lab, validate_rgb


def test_white_maps_to_reference_white():
    lab = rgb_to_lab(np.ones((1, 1, 3)))
    assert lab.L[0, 0] == pytest.approx(100.0, abs=1e-3)
    assert abs(lab.a[0, 0]) < 0.5 and abs(lab.b[0, 0]) < 0.5


def test_black_maps_to_zero_luminance():
    lab = rgb_to_lab(np.zeros((1, 1, 3)))
    assert lab.L[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert abs(lab.a[0, 0]) < 1e-6 and abs(lab.b[0, 0]) < 1e-6


def test_mid_gray_matches_independent_conversion():
    # independent oracle: skimage's own sRGB -> XYZ -> Lab implementation
    sc = pytest.importorskip("skimage.color")
    mine = rgb_to_lab(np.full((1, 1, 3), 0.5)).as_array()
    ref = sc.rgb2lab(np.full((1, 1, 3), 0.5))
    assert np.abs(mine - ref).max() < 0.01


def test_random_colors_match_independent_conversion():
    sc = pytest.importorskip("skimage.color")
    rng = np.random.default_rng(0)
    rgb = rng.random((64, 64, 3))
    assert np.abs(rgb_to_lab(rgb).as_array() - sc.rgb2lab(rgb)).max() < 0.01


def test_lab_white_to_rgb():
    rgb, clamped = lab_to_rgb(LabImage.white(1, 1))
    assert np.abs(rgb - 1.0).max() < 1e-3
    assert clamped == 0


def test_lab_black_to_rgb():
    zeros = np.zeros((1, 1))
    rgb, _ = lab_to_rgb(LabImage(zeros, zeros, zeros))
    assert np.abs(rgb).max() < 1e-6


def test_roundtrip_random_srgb():
    rng = np.random.default_rng(7)
    rgb = rng.random((100, 100, 3))
    back, clamped = lab_to_rgb(rgb_to_lab(rgb))
    assert np.abs(back - rgb).max() < 0.5 / 255.0
    assert clamped == 0


def test_roundtrip_lab_side():
    rng = np.random.default_rng(8)
    lab = rgb_to_lab(rng.random((64, 64, 3)))
    rgb, _ = lab_to_rgb(lab)
    again = rgb_to_lab(rgb)
    assert np.abs(again.as_array() - lab.as_array()).max() < 1e-3


def test_out_of_gamut_is_clamped_and_counted():
    h, w = 1, 1
    loud = LabImage(np.full((h, w), 50.0), np.full((h, w), 120.0), np.full((h, w), -120.0))
    rgb, clamped = lab_to_rgb(loud)
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0
    assert clamped > 0


def test_validate_rgb_rejects_nonfinite():
    bad = np.ones((2, 2, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        validate_rgb(bad)


def test_validate_rgb_rejects_out_of_range():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        validate_rgb(np.full((2, 2, 3), 1.5))


def test_lab_image_rejects_out_of_range_channels():
    ok = np.zeros((2, 2))
    with pytest.raises(ValueError):
        LabImage(np.full((2, 2), 101.0), ok, ok)
    with pytest.raises(ValueError):
        LabImage(ok, np.full((2, 2), 130.0), ok)
    with pytest.raises(ValueError):
        LabImage(ok, ok, np.full((2, 2), np.nan))


@settings(max_examples=50, deadline=None)
@given(
    st.tuples(
        st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0)
    )
)
def test_rgb_to_lab_always_satisfies_range_invariants(color):
    lab = rgb_to_lab(np.array(color).reshape(1, 1, 3))
    assert 0.0 <= lab.L[0, 0] <= 100.0
    assert -128.0 <= lab.a[0, 0] <= 128.0
    assert -128.0 <= lab.b[0, 0] <= 128.0


# --- grayscale replication operator ---


def test_gray3_channels_identical():
    L = torch.full((1, 1, 4, 4), 50.0)
    g = l_to_gray3(L)
    assert g.shape == (1, 3, 4, 4)
    assert torch.equal(g[:, 0], g[:, 1]) and torch.equal(g[:, 1], g[:, 2])


def test_gray3_accepts_bare_map():
    g = l_to_gray3(torch.rand(5, 6))
    assert g.shape == (3, 5, 6)


def test_gray3_rejects_multichannel():
    with pytest.raises(ValueError):
        l_to_gray3(torch.rand(1, 2, 4, 4))


def test_gray3_single_channel_loss_gradient_is_one_third():
    L = torch.rand(2, 1, 4, 4, requires_grad=True)
    l_to_gray3(L)[:, 0].sum().backward()
    assert torch.allclose(L.grad, torch.full_like(L, 1.0 / 3.0))


def test_gray3_full_sum_gradient_is_one():
    L = torch.rand(2, 1, 4, 4, requires_grad=True)
    l_to_gray3(L).sum().backward()
    assert torch.allclose(L.grad, torch.ones_like(L))


def test_gray3_averaging_contract_by_finite_differences():
    # finite differences measure the true gradient of the composed loss
    # (the per-channel sum); the averaging rule must report exactly a third
    # of it, for an arbitrary smooth downstream loss
    torch.manual_seed(0)
    L = torch.rand(1, 1, 3, 3, dtype=torch.float64, requires_grad=True)
    w = torch.randn(1, 3, 3, 3, dtype=torch.float64)

    def loss_of(Lx):
        g = l_to_gray3(Lx)
        return (torch.sin(g) * w).sum() + (g**2).mean()

    loss_of(L).backward()
    eps = 1e-6
    fd = torch.zeros_like(L)
    for idx in np.ndindex(3, 3):
        plus = L.detach().clone()
        plus[0, 0, idx[0], idx[1]] += eps
        minus = L.detach().clone()
        minus[0, 0, idx[0], idx[1]] -= eps
        fd[0, 0, idx[0], idx[1]] = (loss_of(plus) - loss_of(minus)) / (2 * eps)
    assert torch.allclose(3.0 * L.grad, fd, rtol=1e-4, atol=1e-7)
