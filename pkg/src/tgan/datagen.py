"""Training-pair synthesis: foreground masks, sketches, texture and color
patches, and the 5-channel input stack.

Every operation is a pure function of its inputs and an explicit seed, so a
pipeline can fan out across workers with per-example seeds derived as
``derive_seed(global_seed, source_id)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import cv2
import numpy as np
from PIL import Image
from scipy import ndimage

from .colorkit import LabImage, rgb_to_lab, validate_rgb

logger = logging.getLogger(__name__)

COLOR_SENTINEL = -200.0
MIN_PATCH_OVERLAP = 0.70

SKETCH_METHODS = ("mask_canny", "xdog", "learned_edges")
MASK_MODES = ("white_background", "provided", "sketch_fill")

# optional pluggable sketcher for the learned-edges method
_learned_edge_detector: Callable[[np.ndarray], np.ndarray] | None = None


class DatagenError(Exception):
    """Base error for data-generation failures."""


class EmptyForegroundError(DatagenError):
    """Raised when an image has no foreground pixels."""


class SamplingError(DatagenError):
    """Raised when no patch placement satisfies the overlap rule."""


class ConfigurationError(DatagenError):
    """Raised for unknown methods or invalid configuration."""


def derive_seed(global_seed: int, *parts) -> int:
    """Stable per-example seed from a global seed and identifying parts."""
    h = hashlib.sha256(repr((global_seed, *parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


@dataclass(frozen=True)
class SegmentationMask:
    """Binary foreground mask; 1 marks foreground."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ValueError(f"mask must be H x W, got shape {m.shape}")
        vals = np.unique(m)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError(f"mask values must be 0/1, got {vals[:8]}")
        object.__setattr__(self, "mask", m.astype(np.uint8))

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class PatchPlacement:
    """A rectangle binding a texture or color crop to an image region."""

    x: int
    y: int
    w: int
    h: int
    overlap: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"placement extent must be positive, got {self.w}x{self.h}")

    def validate_bounds(self, height: int, width: int) -> "PatchPlacement":
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise ValueError(
                f"placement ({self.x},{self.y},{self.w},{self.h}) exceeds "
                f"image bounds {width}x{height}"
            )
        return self

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass
class InputStack:
    """The 5-channel network input.

    Channels are network-facing: sketch and tex_mask are binary, the
    texture intensity is L/100 in [0, 1] (zero outside placements), and the
    color channels carry ab/128 inside color placements and the -200
    sentinel elsewhere.
    """

    sketch: np.ndarray
    tex_intensity: np.ndarray
    tex_mask: np.ndarray
    color_a: np.ndarray
    color_b: np.ndarray

    def validate(self) -> "InputStack":
        chans = {
            "sketch": self.sketch,
            "tex_intensity": self.tex_intensity,
            "tex_mask": self.tex_mask,
            "color_a": self.color_a,
            "color_b": self.color_b,
        }
        shapes = {c.shape for c in chans.values()}
        if len(shapes) != 1 or self.sketch.ndim != 2:
            raise ValueError(f"channels must share one H x W shape, got {shapes}")
        for name in ("sketch", "tex_mask"):
            if not np.all(np.isin(np.unique(chans[name]), (0, 1))):
                raise ValueError(f"{name} must be binary")
        if self.tex_intensity.min() < 0.0 or self.tex_intensity.max() > 1.0:
            raise ValueError("tex_intensity must lie in [0, 1]")
        if np.any(self.tex_intensity[self.tex_mask == 0] != 0.0):
            raise ValueError("tex_intensity must be 0 wherever tex_mask is 0")
        a_inv = self.color_a == COLOR_SENTINEL
        b_inv = self.color_b == COLOR_SENTINEL
        if not np.array_equal(a_inv, b_inv):
            raise ValueError("color_a and color_b sentinels must coincide")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return self.sketch.shape

    def as_array(self) -> np.ndarray:
        """Stack channels into a (5, H, W) float32 array."""
        return np.stack(
            [self.sketch, self.tex_intensity, self.tex_mask, self.color_a, self.color_b]
        ).astype(np.float32)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "InputStack":
        if arr.ndim != 3 or arr.shape[0] != 5:
            raise ValueError(f"expected (5, H, W), got {arr.shape}")
        return cls(*arr)

    @classmethod
    def blank(cls, height: int, width: int) -> "InputStack":
        """All-zero control channels and sentinel color channels."""
        z = np.zeros((height, width), dtype=np.float32)
        s = np.full((height, width), COLOR_SENTINEL, dtype=np.float32)
        return cls(z, z.copy(), z.copy(), s, s.copy())


@dataclass
class TrainingExample:
    input: InputStack
    target: LabImage
    mask: SegmentationMask
    source_id: str
    placements: dict = field(default_factory=dict)

    def validate(self) -> "TrainingExample":
        self.input.validate()
        if self.input.shape != self.target.shape or self.input.shape != self.mask.shape:
            raise ValueError("input, target and mask must share H x W")
        return self


@dataclass
class TextureExample:
    """A standalone texture image used during fine-tuning."""

    texture: LabImage
    source_id: str


# ---------------------------------------------------------------------------
# foreground masks
# ---------------------------------------------------------------------------


def compute_foreground_mask(
    photo: np.ndarray,
    mode: str = "white_background",
    provided_mask: np.ndarray | None = None,
    sketch: np.ndarray | None = None,
    tau_white: float = 0.95,
    source_id: str = "<unnamed>",
) -> SegmentationMask:
    """Compute the binary foreground mask for a photo.

    white_background: a pixel is background iff its min channel > tau_white.
    provided: binarize a supplied mask array.
    sketch_fill: background is the border-connected region outside sketch
    strokes (hole filling of the sketch).
    """
    if mode == "white_background":
        arr = validate_rgb(photo)
        fg = arr.min(axis=-1) <= tau_white
    elif mode == "provided":
        if provided_mask is None:
            raise ConfigurationError("mode='provided' requires provided_mask")
        fg = np.asarray(provided_mask) > 0.5
    elif mode == "sketch_fill":
        if sketch is None:
            raise ConfigurationError("mode='sketch_fill' requires a sketch array")
        strokes = np.asarray(sketch) > 0.5
        open_space, n = ndimage.label(~strokes)
        border_labels = np.unique(
            np.concatenate(
                [open_space[0], open_space[-1], open_space[:, 0], open_space[:, -1]]
            )
        )
        border_labels = border_labels[border_labels != 0]
        background = np.isin(open_space, border_labels)
        fg = ~background
    else:
        raise ConfigurationError(f"unknown mask mode {mode!r}; expected one of {MASK_MODES}")

    if not fg.any():
        raise EmptyForegroundError(f"image {source_id!r} has no foreground pixels")
    return SegmentationMask(fg.astype(np.uint8))


# ---------------------------------------------------------------------------
# sketches
# ---------------------------------------------------------------------------


def register_learned_edge_detector(fn: Callable[[np.ndarray], np.ndarray] | None) -> None:
    """Plug in a learned edge detector for method='learned_edges'.

    ``fn`` maps an H x W x 3 sRGB array in [0, 1] to an H x W binary stroke
    array. Pass None to unregister.
    """
    global _learned_edge_detector
    _learned_edge_detector = fn


def xdog(
    gray: np.ndarray,
    sigma: float = 1.0,
    k: float = 1.6,
    tau: float = 0.98,
    eps: float = 0.01,
    phi: float = 200.0,
) -> np.ndarray:
    """Extended difference-of-Gaussians stylization of a [0, 1] gray image.

    Returns the soft edge map in [0, 1]; values below 0.5 are strokes.
    """
    gray = np.asarray(gray, dtype=np.float64)
    g1 = ndimage.gaussian_filter(gray, sigma)
    g2 = ndimage.gaussian_filter(gray, k * sigma)
    d = g1 - tau * g2
    e = np.where(d > eps, 1.0, 1.0 + np.tanh(phi * (d - eps)))
    return np.clip(e, 0.0, 1.0)


def generate_sketch(
    photo: np.ndarray | None,
    mask: SegmentationMask | None,
    method: str = "mask_canny",
    xdog_params: dict | None = None,
) -> np.ndarray:
    """Produce an H x W binary stroke image (1 = stroke).

    mask_canny traces the segmentation-mask boundary; xdog stylizes the
    photo's lightness; learned_edges defers to a registered detector.
    """
    if method == "mask_canny":
        if mask is None:
            raise ConfigurationError("method='mask_canny' requires a mask")
        edges = cv2.Canny(mask.mask * 255, 100, 200)
        return (edges > 0).astype(np.uint8)
    if method == "xdog":
        if photo is None:
            raise ConfigurationError("method='xdog' requires a photo")
        lab = rgb_to_lab(validate_rgb(photo))
        soft = xdog(lab.L / 100.0, **(xdog_params or {}))
        return (soft < 0.5).astype(np.uint8)
    if method == "learned_edges":
        if _learned_edge_detector is None:
            raise ConfigurationError(
                "no learned edge detector registered; call "
                "register_learned_edge_detector() or use mask_canny/xdog"
            )
        return (np.asarray(_learned_edge_detector(photo)) > 0.5).astype(np.uint8)
    raise ConfigurationError(f"unknown sketch method {method!r}; expected one of {SKETCH_METHODS}")


# ---------------------------------------------------------------------------
# patch placements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlacementConfig:
    min_size: int = 12
    max_size: int = 32
    max_retries: int = 100
    shrink_factor: float = 0.8

    @classmethod
    def for_resolution(cls, resolution: int) -> "PlacementConfig":
        # defaults: side in [24, 64] at 128 px, [48, 128] at 256 px, scaled otherwise
        return cls(min_size=max(4, resolution * 24 // 128), max_size=max(6, resolution // 2))


def _rect_overlap(mask: np.ndarray, x: int, y: int, w: int, h: int) -> float:
    return float(mask[y : y + h, x : x + w].mean())


def sample_patch_placement(
    mask: SegmentationMask,
    rng_seed: int,
    cfg: PlacementConfig | None = None,
) -> PatchPlacement:
    """Sample a square patch placement with >= 70% foreground overlap.

    Each rejected draw picks a new location and shrinks the side by the
    configured factor (floored at min_size). Deterministic given the seed.
    """
    cfg = cfg or PlacementConfig()
    if mask.coverage == 0.0:
        raise SamplingError("mask has no foreground")
    H, W = mask.shape
    rng = np.random.default_rng(rng_seed)
    size = int(rng.integers(cfg.min_size, cfg.max_size + 1))
    size = min(size, H, W)
    for _ in range(cfg.max_retries):
        x = int(rng.integers(0, W - size + 1))
        y = int(rng.integers(0, H - size + 1))
        overlap = _rect_overlap(mask.mask, x, y, size, size)
        if overlap >= MIN_PATCH_OVERLAP:
            return PatchPlacement(x, y, size, size, overlap)
        size = max(cfg.min_size, int(round(size * cfg.shrink_factor)))
    raise SamplingError(
        f"no placement with overlap >= {MIN_PATCH_OVERLAP} found in "
        f"{cfg.max_retries} retries (mask coverage {mask.coverage:.3f})"
    )


# ---------------------------------------------------------------------------
# training examples
# ---------------------------------------------------------------------------


@dataclass
class ExampleConfig:
    sketch_method: str = "mask_canny"
    mask_mode: str = "white_background"
    tau_white: float = 0.95
    patches: int | str = 1  # 1, 2, or "mixed" for a 50/50 coin flip
    placement: PlacementConfig | None = None
    xdog_params: dict | None = None


def _paste_texture_channels(
    stack: InputStack, lab: LabImage, placement: PatchPlacement
) -> None:
    ys, xs = placement.slices()
    stack.tex_intensity[ys, xs] = (lab.L[ys, xs] / 100.0).astype(np.float32)
    stack.tex_mask[ys, xs] = 1.0


def _whiteout_background(lab: LabImage, mask: SegmentationMask) -> LabImage:
    bg = mask.mask == 0
    L, a, b = lab.L.copy(), lab.a.copy(), lab.b.copy()
    L[bg], a[bg], b[bg] = 100.0, 0.0, 0.0
    return LabImage(L, a, b)


@dataclass
class PreparedPhoto:
    """Iteration-invariant pieces of a photo: Lab values, mask, sketch."""

    lab: LabImage
    mask: SegmentationMask
    sketch: np.ndarray
    target: LabImage
    source_id: str


def prepare_photo(
    photo: np.ndarray,
    cfg: ExampleConfig | None = None,
    provided_mask: np.ndarray | None = None,
    source_id: str = "<unnamed>",
) -> PreparedPhoto:
    """Run the per-photo steps shared by every example drawn from it."""
    cfg = cfg or ExampleConfig()
    arr = validate_rgb(photo)

    if cfg.mask_mode == "sketch_fill":
        # mask_canny needs a mask, so the fill seeds from an xDoG sketch
        fill_method = "xdog" if cfg.sketch_method == "mask_canny" else cfg.sketch_method
        sketch = generate_sketch(arr, None, fill_method, cfg.xdog_params)
        mask = compute_foreground_mask(
            arr, "sketch_fill", sketch=sketch, source_id=source_id
        )
        if cfg.sketch_method == "mask_canny":
            sketch = generate_sketch(arr, mask, "mask_canny")
    else:
        mask = compute_foreground_mask(
            arr,
            cfg.mask_mode,
            provided_mask=provided_mask,
            tau_white=cfg.tau_white,
            source_id=source_id,
        )
        sketch = generate_sketch(arr, mask, cfg.sketch_method, cfg.xdog_params)

    lab = rgb_to_lab(arr)
    return PreparedPhoto(lab, mask, sketch, _whiteout_background(lab, mask), source_id)


def assemble_example(
    prepared: PreparedPhoto, rng_seed: int, cfg: ExampleConfig | None = None
) -> TrainingExample:
    """Sample placements and assemble the 5-channel stack for one photo."""
    cfg = cfg or ExampleConfig()
    lab, mask = prepared.lab, prepared.mask
    H, W = lab.shape
    rng = np.random.default_rng(rng_seed)
    placement_cfg = cfg.placement or PlacementConfig.for_resolution(min(H, W))

    if cfg.patches == "mixed":
        n_patches = int(rng.integers(1, 3))
    else:
        n_patches = int(cfg.patches)
        if n_patches not in (1, 2):
            raise ConfigurationError(f"patches must be 1, 2 or 'mixed', got {cfg.patches!r}")

    stack = InputStack.blank(H, W)
    stack.sketch = prepared.sketch.astype(np.float32)

    tex_placements: list[PatchPlacement] = []
    for i in range(n_patches):
        for attempt in range(8):
            p = sample_patch_placement(
                mask, derive_seed(rng_seed, "tex", i, attempt), placement_cfg
            )
            ys, xs = p.slices()
            if not tex_placements or stack.tex_mask[ys, xs].sum() == 0:
                break  # disjoint from earlier placements (or first patch)
        tex_placements.append(p)
        _paste_texture_channels(stack, lab, p)

    color_placement = sample_patch_placement(
        mask, derive_seed(rng_seed, "color"), placement_cfg
    )
    ys, xs = color_placement.slices()
    stack.color_a[ys, xs] = (lab.a[ys, xs] / 128.0).astype(np.float32)
    stack.color_b[ys, xs] = (lab.b[ys, xs] / 128.0).astype(np.float32)

    example = TrainingExample(
        input=stack.validate(),
        target=prepared.target,
        mask=mask,
        source_id=prepared.source_id,
        placements={"texture": tex_placements, "color": color_placement},
    )
    return example.validate()


def make_training_example(
    photo: np.ndarray,
    rng_seed: int,
    cfg: ExampleConfig | None = None,
    provided_mask: np.ndarray | None = None,
    source_id: str = "<unnamed>",
) -> TrainingExample:
    """Build one (input, target) pair from a ground-truth photo.

    The texture channels carry the normalized L of a ground-truth crop
    under a sampled placement; the color channels carry ground-truth ab/128
    inside an independently sampled placement and the sentinel elsewhere.
    The target is the Lab photo with background whited out. Bit-identical
    for identical (photo, seed, cfg).
    """
    prepared = prepare_photo(photo, cfg, provided_mask, source_id)
    return assemble_example(prepared, rng_seed, cfg)


# ---------------------------------------------------------------------------
# external textures
# ---------------------------------------------------------------------------

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def load_image(path: Path) -> np.ndarray:
    """Decode an image file to an H x W x 3 sRGB array in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def ingest_texture_dir(
    path: str | Path,
    resolution: int = 128,
    crops_per_image: int = 50,
    seed: int = 0,
) -> list[TextureExample]:
    """Load a texture directory into a pool of fixed-size Lab crops.

    Files are processed in lexicographic order; undecodable files are
    skipped with a warning. Images smaller than the target resolution are
    upscaled before cropping, so every texture is at least network-sized.
    """
    root = Path(path)
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise DatagenError(f"no texture images found in {root}")
    pool: list[TextureExample] = []
    for f in files:
        try:
            arr = load_image(f)
        except Exception as exc:  # undecodable file
            warnings.warn(f"skipping undecodable texture {f.name}: {exc}")
            continue
        H, W = arr.shape[:2]
        if min(H, W) < resolution:
            scale = resolution / min(H, W)
            arr = cv2.resize(
                arr, (max(resolution, int(round(W * scale))), max(resolution, int(round(H * scale)))),
                interpolation=cv2.INTER_LINEAR,
            )
            arr = np.clip(arr, 0.0, 1.0)
            H, W = arr.shape[:2]
        rng = np.random.default_rng(derive_seed(seed, f.name))
        for i in range(crops_per_image):
            y = int(rng.integers(0, H - resolution + 1))
            x = int(rng.integers(0, W - resolution + 1))
            crop = arr[y : y + resolution, x : x + resolution]
            pool.append(TextureExample(rgb_to_lab(crop), f"{f.name}#crop{i}"))
    if not pool:
        raise DatagenError(f"no decodable texture images in {root}")
    logger.info("ingested %d texture crops from %s", len(pool), root)
    return pool


# ---------------------------------------------------------------------------
# dataset builds (CLI surface)
# ---------------------------------------------------------------------------


def list_photos(root: str | Path) -> list[Path]:
    photos_dir = Path(root) / "photos"
    if not photos_dir.is_dir():
        raise DatagenError(f"missing photos directory {photos_dir}")
    files = sorted(p for p in photos_dir.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise DatagenError(f"no photos found in {photos_dir}")
    return files


def find_provided_mask(root: Path, photo: Path) -> np.ndarray | None:
    mask_path = Path(root) / "masks" / (photo.stem + ".png")
    if mask_path.exists():
        with Image.open(mask_path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return None


def build_dataset(
    root: str | Path,
    out: str | Path,
    resolution: int = 128,
    cfg: ExampleConfig | None = None,
    seed: int = 0,
    shard_size: int = 64,
) -> dict:
    """Generate examples from ``<root>/photos`` into sharded npz archives.

    Writes ``shard-NNNNN.npz`` files plus a ``manifest.json`` with counts,
    the config echo, and per-shard sha256 checksums. Returns the manifest.
    """
    cfg = cfg or ExampleConfig()
    root, out = Path(root), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    photos = list_photos(root)

    shards = []
    buf_inputs, buf_targets, buf_masks, buf_ids = [], [], [], []
    skipped = []

    def flush():
        if not buf_inputs:
            return
        idx = len(shards)
        fname = f"shard-{idx:05d}.npz"
        fpath = out / fname
        with open(fpath, "wb") as fh:
            np.savez(
                fh,
                inputs=np.stack(buf_inputs),
                targets=np.stack(buf_targets).astype(np.float32),
                masks=np.stack(buf_masks),
                source_ids=np.array(buf_ids),
            )
        digest = hashlib.sha256(fpath.read_bytes()).hexdigest()
        shards.append({"file": fname, "count": len(buf_inputs), "sha256": digest})
        for buf in (buf_inputs, buf_targets, buf_masks, buf_ids):
            buf.clear()

    for photo_path in photos:
        arr = load_image(photo_path)
        if arr.shape[0] != resolution or arr.shape[1] != resolution:
            arr = np.clip(
                cv2.resize(arr, (resolution, resolution), interpolation=cv2.INTER_AREA),
                0.0,
                1.0,
            )
        try:
            ex = make_training_example(
                arr,
                derive_seed(seed, photo_path.name),
                cfg,
                provided_mask=find_provided_mask(root, photo_path),
                source_id=photo_path.name,
            )
        except DatagenError as exc:
            logger.warning("skipping %s: %s", photo_path.name, exc)
            skipped.append({"file": photo_path.name, "reason": str(exc)})
            continue
        buf_inputs.append(ex.input.as_array())
        buf_targets.append(ex.target.as_array())
        buf_masks.append(ex.mask.mask)
        buf_ids.append(ex.source_id)
        if len(buf_inputs) >= shard_size:
            flush()
    flush()

    manifest = {
        "examples": int(sum(s["count"] for s in shards)),
        "skipped": skipped,
        "shards": shards,
        "resolution": resolution,
        "seed": seed,
        "config": {
            "sketch_method": cfg.sketch_method,
            "mask_mode": cfg.mask_mode,
            "tau_white": cfg.tau_white,
            "patches": cfg.patches,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
