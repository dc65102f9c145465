"""Command-line entry points: datagen, pretrain, finetune, infer, serve."""

from __future__ import annotations

import json
import logging

import click
import numpy as np
from PIL import Image

from .config import load_config
from .datagen import ExampleConfig, PatchPlacement, build_dataset
from .infer import SynthesisRequest, rgb_hex_to_ab, synthesize


def _parse_rect(spec: str, what: str) -> tuple[str, PatchPlacement]:
    """Split 'value:x,y,w,h' into (value, placement)."""
    try:
        value, rect = spec.rsplit(":", 1)
        x, y, w, h = (int(v) for v in rect.split(","))
        return value, PatchPlacement(x, y, w, h)
    except Exception:
        raise click.BadParameter(f"expected {what}:x,y,w,h, got {spec!r}")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Sketch-, texture-, and color-conditioned image synthesis toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--root", required=True, type=click.Path(exists=True), help="Dataset root with photos/ (and optional masks/, textures/).")
@click.option("--out", required=True, type=click.Path(), help="Output directory for shards and manifest.")
@click.option("--resolution", default=128, type=click.Choice(["128", "256", "64"]), show_default=True)
@click.option("--sketch", "sketch_method", default="mask_canny", type=click.Choice(["mask_canny", "xdog", "learned_edges"]), show_default=True)
@click.option("--mask-mode", default="white_background", type=click.Choice(["white_background", "provided", "sketch_fill"]), show_default=True)
@click.option("--patches", default="1", type=click.Choice(["1", "2", "mixed"]), show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def datagen(root, out, resolution, sketch_method, mask_mode, patches, seed):
    """Generate sharded (input, target) archives from a photo collection."""
    cfg = ExampleConfig(
        sketch_method=sketch_method,
        mask_mode=mask_mode,
        patches=patches if patches == "mixed" else int(patches),
    )
    manifest = build_dataset(root, out, resolution=int(resolution), cfg=cfg, seed=seed)
    click.echo(json.dumps({"examples": manifest["examples"], "shards": len(manifest["shards"])}))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--resume", default=None, type=click.Path(exists=True), help="Checkpoint to resume from.")
def pretrain(config_path, resume):
    """Stage-1 ground-truth pre-training."""
    from .train import run

    config = load_config(config_path)
    if config.stage != "pretrain":
        raise click.UsageError(f"config stage is {config.stage!r}, expected 'pretrain'")
    final = run(config, resume=resume)
    click.echo(str(final))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--init", "init_checkpoint", default=None, type=click.Path(exists=True), help="Stage-1 checkpoint to initialize from.")
@click.option("--resume", default=None, type=click.Path(exists=True), help="Checkpoint to resume from.")
def finetune(config_path, init_checkpoint, resume):
    """Stage-2 external-texture fine-tuning."""
    from .train import run

    config = load_config(config_path, validate=False)
    if config.stage != "finetune":
        raise click.UsageError(f"config stage is {config.stage!r}, expected 'finetune'")
    if init_checkpoint:
        config.init_checkpoint = init_checkpoint
    config.validate()
    final = run(config, resume=resume)
    click.echo(str(final))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--sketch", "sketch_path", required=True, type=click.Path(exists=True))
@click.option("--texture", "textures", multiple=True, help="tex.png:x,y,w,h (repeatable).")
@click.option("--color", "colors", multiple=True, help="'#rrggbb':x,y,w,h (repeatable).")
@click.option("--resolution", default=None, type=int, help="Output resolution (defaults to sketch size).")
@click.option("--out", "out_path", required=True, type=click.Path())
def infer(checkpoint, sketch_path, textures, colors, resolution, out_path):
    """Feed-forward synthesis from a sketch plus texture/color patches."""
    with Image.open(sketch_path) as im:
        sketch = np.asarray(im.convert("L"), dtype=np.float64) / 255.0

    texture_patches = []
    for spec in textures:
        path, placement = _parse_rect(spec, "tex.png")
        with Image.open(path) as im:
            img = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        texture_patches.append((img, placement))
    color_patches = []
    for spec in colors:
        hex_color, placement = _parse_rect(spec, "'#rrggbb'")
        color_patches.append((rgb_hex_to_ab(hex_color), placement))

    req = SynthesisRequest(
        sketch=sketch > 0.5,
        texture_patches=texture_patches,
        color_patches=color_patches,
        resolution=resolution,
    )
    rgb, meta = synthesize(checkpoint, req)
    Image.fromarray((np.clip(rgb, 0, 1) * 255.0 + 0.5).astype(np.uint8)).save(out_path)
    click.echo(
        f"wrote {out_path} ({meta['seconds']*1000:.1f} ms, "
        f"internal resolution {meta['internal_resolution']})"
    )


@main.command()
@click.option("--checkpoint", default=None, type=click.Path(exists=True))
@click.option("--port", default=8500, type=int, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--stub", is_flag=True, help="Serve the deterministic non-learned renderer.")
@click.option("--stub-resolution", default=128, type=int, show_default=True)
@click.option("--max-inflight", default=4, type=int, show_default=True)
def serve(checkpoint, port, host, stub, stub_resolution, max_inflight):
    """Run the HTTP synthesis service."""
    from .service import serve as run_serve

    if not stub and not checkpoint:
        raise click.UsageError("provide --checkpoint or --stub")
    run_serve(
        checkpoint,
        port=port,
        stub=stub,
        stub_resolution=stub_resolution,
        max_inflight=max_inflight,
        host=host,
    )


if __name__ == "__main__":
    main()
