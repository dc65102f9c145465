"""HTTP facade over the synthesis path for the interactive studio and
programmatic clients.

The server is stateless over an immutable model snapshot: identical
requests produce byte-identical PNG responses. Request validation fails
fast with field-level messages and never reaches the model layer.
"""

from __future__ import annotations

import base64
import binascii
import contextlib
import io
import logging
import threading
import uuid
from typing import Callable

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError as FastapiValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, Field

from .colorkit import LabImage, lab_to_rgb
from .datagen import COLOR_SENTINEL, PatchPlacement
from .infer import (
    SUPPORTED_RESOLUTIONS,
    RequestValidationError,
    SynthesisModel,
    SynthesisRequest,
    build_input,
    rgb_hex_to_ab,
    synthesize,
)

logger = logging.getLogger(__name__)


class TexturePatchDTO(BaseModel):
    image: str  # base64 PNG
    x: int
    y: int
    w: int
    h: int


class ColorPatchDTO(BaseModel):
    rgb: str  # '#rrggbb'
    x: int
    y: int
    w: int
    h: int


class SynthesizeDTO(BaseModel):
    sketch: str  # base64 PNG
    texture_patches: list[TexturePatchDTO] = Field(default_factory=list)
    color_patches: list[ColorPatchDTO] = Field(default_factory=list)
    resolution: int | None = None


class FieldError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


def _decode_png_field(field: str, b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise FieldError(field, f"invalid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as exc:
        raise FieldError(field, f"undecodable image: {exc}") from exc


def decode_request(dto: SynthesizeDTO) -> SynthesisRequest:
    """Convert the wire DTO into a validated SynthesisRequest."""
    sketch_rgb = _decode_png_field("sketch", dto.sketch)
    sketch = (sketch_rgb.mean(axis=-1) > 0.5).astype(np.float32)

    texture_patches = []
    for i, tp in enumerate(dto.texture_patches):
        img = _decode_png_field(f"texture_patches[{i}].image", tp.image)
        texture_patches.append((img, PatchPlacement(tp.x, tp.y, tp.w, tp.h)))
    color_patches = []
    for i, cp in enumerate(dto.color_patches):
        try:
            ab = rgb_hex_to_ab(cp.rgb)
        except RequestValidationError as exc:
            raise FieldError(f"color_patches[{i}].rgb", str(exc)) from exc
        color_patches.append((ab, PatchPlacement(cp.x, cp.y, cp.w, cp.h)))

    resolution = dto.resolution or sketch.shape[0]
    if sketch.shape != (resolution, resolution):
        import cv2

        sketch = cv2.resize(sketch, (resolution, resolution), interpolation=cv2.INTER_NEAREST)

    # fail fast on bad rectangles so they never reach the model layer
    for kind, patches in (("texture_patches", texture_patches), ("color_patches", color_patches)):
        for i, (_, placement) in enumerate(patches):
            try:
                placement.validate_bounds(resolution, resolution)
            except ValueError as exc:
                raise FieldError(f"{kind}[{i}]", str(exc)) from exc

    return SynthesisRequest(
        sketch=sketch,
        texture_patches=texture_patches,
        color_patches=color_patches,
        resolution=resolution,
    )


class StubProvider:
    """Deterministic non-learned renderer: the sketch composited with the
    pasted texture and color patches. Lets the protocol and the studio be
    exercised with no trained model."""

    def __init__(self, resolution: int = 128):
        self.resolution = resolution
        self.checkpoint_id = f"stub-{resolution}"

    def synthesize(self, req: SynthesisRequest) -> tuple[np.ndarray, dict]:
        stack = build_input(req)
        L = np.full(stack.shape, 100.0)
        L[stack.tex_mask > 0.5] = stack.tex_intensity[stack.tex_mask > 0.5] * 100.0
        L[stack.sketch > 0.5] = 0.0
        valid = stack.color_a != COLOR_SENTINEL
        a = np.where(valid, stack.color_a * 128.0, 0.0)
        b = np.where(valid, stack.color_b * 128.0, 0.0)
        rgb, clamped = lab_to_rgb(LabImage(L, a, b))
        return rgb, {
            "internal_resolution": req.resolution,
            "clamped_values": clamped,
            "seconds": 0.0,
            "checkpoint_id": self.checkpoint_id,
        }


class CheckpointProvider:
    """Synthesis over a trained generator checkpoint."""

    def __init__(self, checkpoint_path: str):
        self.model = SynthesisModel(checkpoint_path)
        self.resolution = self.model.resolution
        self.checkpoint_id = self.model.checkpoint_id

    def synthesize(self, req: SynthesisRequest) -> tuple[np.ndarray, dict]:
        return synthesize(self.model, req)


def encode_png(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray((np.clip(rgb, 0, 1) * 255.0 + 0.5).astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def create_app(
    provider_factory: Callable[[], object],
    max_inflight: int = 4,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    """Build the service app; the model loads on startup in a background
    thread so health reports 503 until it is ready."""

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        def worker():
            try:
                app.state.provider = provider_factory()
            except Exception as exc:
                logger.exception("model load failed")
                app.state.load_error = str(exc)

        threading.Thread(target=worker, daemon=True).start()
        yield

    app = FastAPI(title="tgan synthesis service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.provider = None
    app.state.load_error = None
    app.state.inflight = threading.BoundedSemaphore(max_inflight)

    @app.exception_handler(FastapiValidationError)
    async def _dto_error(request: Request, exc: FastapiValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.get("/v1/health")
    def health():
        provider = app.state.provider
        if provider is None:
            status = 503
            body = {"status": "error" if app.state.load_error else "loading"}
            if app.state.load_error:
                body["detail"] = app.state.load_error
            return JSONResponse(status_code=status, content=body)
        return {
            "status": "ok",
            "checkpoint_id": provider.checkpoint_id,
            "resolution": provider.resolution,
        }

    @app.post("/v1/synthesize")
    def synthesize_endpoint(dto: SynthesizeDTO):
        provider = app.state.provider
        if provider is None:
            return JSONResponse(status_code=503, content={"status": "loading"})
        if not app.state.inflight.acquire(blocking=False):
            return JSONResponse(status_code=429, content={"detail": "too many in-flight requests"})
        try:
            try:
                req = decode_request(dto)
            except FieldError as exc:
                return JSONResponse(
                    status_code=400,
                    content={"errors": [{"field": exc.field, "message": exc.message}]},
                )
            if req.resolution not in SUPPORTED_RESOLUTIONS:
                return JSONResponse(
                    status_code=422,
                    content={
                        "detail": f"unsupported resolution {req.resolution}; "
                        f"supported: {list(SUPPORTED_RESOLUTIONS)}"
                    },
                )
            try:
                rgb, meta = provider.synthesize(req)
            except RequestValidationError as exc:
                return JSONResponse(
                    status_code=400,
                    content={"errors": [{"field": "placement", "message": str(exc)}]},
                )
            except Exception:
                error_id = uuid.uuid4().hex[:12]
                logger.exception("synthesis failed (error id %s)", error_id)
                return JSONResponse(status_code=500, content={"error_id": error_id})
            return Response(
                content=encode_png(rgb),
                media_type="image/png",
                headers={
                    "X-Duration-Ms": f"{meta['seconds'] * 1000.0:.2f}",
                    "X-Internal-Resolution": str(meta["internal_resolution"]),
                    "X-Checkpoint-Id": str(meta["checkpoint_id"]),
                },
            )
        finally:
            app.state.inflight.release()

    return app


def serve(
    checkpoint: str | None,
    port: int = 8500,
    stub: bool = False,
    stub_resolution: int = 128,
    max_inflight: int = 4,
    host: str = "127.0.0.1",
) -> None:
    """Run the synthesis service with uvicorn."""
    import uvicorn

    if stub:
        factory = lambda: StubProvider(stub_resolution)
    elif checkpoint:
        factory = lambda: CheckpointProvider(checkpoint)
    else:
        raise ValueError("serve requires --checkpoint or --stub")
    app = create_app(factory, max_inflight=max_inflight)
    uvicorn.run(app, host=host, port=port)
