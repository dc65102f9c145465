"""Procedural stand-in data: textures (stripes, dots, checkers) and simple
product-style photos. Lets the pipeline run end to end with no dataset and
feeds the scaled-down training-behavior harnesses."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

TEXTURE_KINDS = ("stripes", "dots", "checkers")


def make_texture(
    kind: str,
    seed: int = 0,
    size: int = 64,
    rgb: bool = True,
) -> np.ndarray:
    """A procedural texture with random phase, scale, and orientation.

    Returns H x W x 3 (or H x W when ``rgb`` is false) in [0, 1].
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    period = rng.uniform(6, 16)
    phase = rng.uniform(0, period)
    lo, hi = rng.uniform(0.1, 0.35), rng.uniform(0.6, 0.9)

    if kind == "stripes":
        field = ((u + phase) % period) < (period / 2)
    elif kind == "checkers":
        v = -xx * np.sin(theta) + yy * np.cos(theta)
        field = (((u + phase) // (period / 2)) + ((v + phase) // (period / 2))) % 2 == 0
    elif kind == "dots":
        v = -xx * np.sin(theta) + yy * np.cos(theta)
        du = ((u + phase) % period) - period / 2
        dv = ((v + phase) % period) - period / 2
        field = np.hypot(du, dv) < period / 4
    else:
        raise ValueError(f"unknown texture kind {kind!r}; expected one of {TEXTURE_KINDS}")

    tex = np.where(field, hi, lo)
    if not rgb:
        return tex
    return np.repeat(tex[..., None], 3, axis=-1)


def make_product_photo(seed: int = 0, size: int = 64, textured: bool = True) -> np.ndarray:
    """A product-style photo: one colored, strongly textured shape on a
    white background. Returns H x W x 3 in [0, 1]."""
    rng = np.random.default_rng(seed)
    img = np.ones((size, size, 3))
    color = rng.uniform(0.2, 0.7, size=3)
    y0, x0 = rng.integers(size // 16, size // 4, size=2)
    h = int(rng.integers(size // 2, size - y0 - 2))
    w = int(rng.integers(size // 2, size - x0 - 2))
    img[y0 : y0 + h, x0 : x0 + w] = color
    if textured:
        kind = TEXTURE_KINDS[int(rng.integers(0, len(TEXTURE_KINDS)))]
        tex = make_texture(kind, seed=int(rng.integers(0, 2**31)), size=size, rgb=False)
        region = img.min(axis=-1) < 0.95
        modulation = rng.uniform(0.3, 0.5) * (tex - tex.mean())
        for c in range(3):
            img[..., c] = np.where(region, np.clip(img[..., c] + modulation, 0.0, 1.0), img[..., c])
    return img


def _save(arr: np.ndarray, path: Path) -> None:
    Image.fromarray((arr * 255 + 0.5).astype(np.uint8)).save(path)


def write_dataset(
    root: str | Path,
    n_photos: int = 8,
    n_textures: int = 8,
    size: int = 64,
    texture_kind: str | None = None,
    seed: int = 0,
) -> Path:
    """Write a ready-to-train dataset layout (photos/ and textures/)."""
    root = Path(root)
    (root / "photos").mkdir(parents=True, exist_ok=True)
    (root / "textures").mkdir(parents=True, exist_ok=True)
    for i in range(n_photos):
        _save(make_product_photo(seed=seed + i, size=size), root / "photos" / f"photo{i:03d}.png")
    kinds = (texture_kind,) if texture_kind else TEXTURE_KINDS
    for i in range(n_textures):
        kind = kinds[i % len(kinds)]
        arr = make_texture(kind, seed=seed + 1000 + i, size=size)
        _save(arr, root / "textures" / f"{kind}{i:03d}.png")
    return root


def make_shape_texture_photo(
    shape_seed: int, texture_seed: int, size: int = 64, kinds=TEXTURE_KINDS
) -> np.ndarray:
    """A photo whose shape and fill texture vary independently.

    Rendering the same shape under several textures makes the sketch alone
    ambiguous, so a network trained on such a grid must read the texture
    patch channels to pick the fill (the structure/texture factorization).
    """
    rng = np.random.default_rng(shape_seed)
    img = np.ones((size, size, 3))
    color = rng.uniform(0.25, 0.65, size=3)
    y0, x0 = rng.integers(size // 16, size // 4, size=2)
    h = int(rng.integers(size // 2, size - y0 - 2))
    w = int(rng.integers(size // 2, size - x0 - 2))
    img[y0 : y0 + h, x0 : x0 + w] = color
    trng = np.random.default_rng(texture_seed)
    kind = kinds[int(trng.integers(0, len(kinds)))]
    tex = make_texture(kind, seed=texture_seed, size=size, rgb=False)
    region = img.min(axis=-1) < 0.95
    modulation = 0.45 * (tex - tex.mean())
    for c in range(3):
        img[..., c] = np.where(region, np.clip(img[..., c] + modulation, 0.0, 1.0), img[..., c])
    return img


def write_grid_dataset(
    root: str | Path,
    n_shapes: int = 4,
    n_textures_per_shape: int = 6,
    n_external_textures: int = 8,
    size: int = 64,
    photo_kinds=TEXTURE_KINDS,
    external_kind: str = "stripes",
    seed: int = 0,
) -> Path:
    """Write a shapes x textures grid plus an external texture pool.

    Keeping ``external_kind`` out of ``photo_kinds`` makes the external
    pool a texture family the pre-training photos never showed.
    """
    root = Path(root)
    (root / "photos").mkdir(parents=True, exist_ok=True)
    (root / "textures").mkdir(parents=True, exist_ok=True)
    for i in range(n_shapes):
        for j in range(n_textures_per_shape):
            arr = make_shape_texture_photo(seed + i, seed + 100 + j, size=size, kinds=photo_kinds)
            _save(arr, root / "photos" / f"shape{i}_tex{j}.png")
    for i in range(n_external_textures):
        arr = make_texture(external_kind, seed=seed + 5000 + i, size=size)
        _save(arr, root / "textures" / f"{external_kind}{i:03d}.png")
    return root
