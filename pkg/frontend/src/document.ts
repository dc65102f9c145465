// Canvas document model: what the user drew, where swatches and color
// patches sit, and how that serializes to the synthesis service DTO.
// No client-side state outside this document affects synthesis.

import { z } from "zod";
import { encodePng, toBase64 } from "./png.js";
import { rasterizeStrokes } from "./rasterize.js";

export const DOCUMENT_VERSION = 1;

export interface Point {
  x: number;
  y: number;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface TexturePlacement {
  /** palette swatch id, or an uploaded image as a data URL */
  swatch: string;
  rect: Rect;
}

export interface ColorPlacement {
  rgb: string; // '#rrggbb'
  rect: Rect;
}

export interface CanvasDocument {
  version: number;
  resolution: number;
  strokes: Point[][];
  texture_placements: TexturePlacement[];
  color_placements: ColorPlacement[];
}

const pointSchema = z.object({ x: z.number(), y: z.number() });
const rectSchema = z.object({
  x: z.number().int(),
  y: z.number().int(),
  w: z.number().int().positive(),
  h: z.number().int().positive(),
});

export const documentSchema = z.object({
  version: z.literal(DOCUMENT_VERSION),
  resolution: z.number().int().positive(),
  strokes: z.array(z.array(pointSchema)),
  texture_placements: z.array(z.object({ swatch: z.string(), rect: rectSchema })),
  color_placements: z.array(
    z.object({ rgb: z.string().regex(/^#[0-9a-fA-F]{6}$/), rect: rectSchema }),
  ),
});

export function emptyDocument(resolution = 128): CanvasDocument {
  return {
    version: DOCUMENT_VERSION,
    resolution,
    strokes: [],
    texture_placements: [],
    color_placements: [],
  };
}

export function rectInBounds(rect: Rect, resolution: number): boolean {
  return rect.x >= 0 && rect.y >= 0 && rect.x + rect.w <= resolution && rect.y + rect.h <= resolution;
}

export function clampRect(rect: Rect, resolution: number): Rect {
  const w = Math.min(rect.w, resolution);
  const h = Math.min(rect.h, resolution);
  return {
    x: Math.max(0, Math.min(rect.x, resolution - w)),
    y: Math.max(0, Math.min(rect.y, resolution - h)),
    w,
    h,
  };
}

// --- DTO serialization -----------------------------------------------------

export interface SynthesizeDTO {
  sketch: string;
  texture_patches: { image: string; x: number; y: number; w: number; h: number }[];
  color_patches: { rgb: string; x: number; y: number; w: number; h: number }[];
  resolution: number;
}

/** Resolve a swatch reference to base64 PNG bytes (no data-url prefix). */
export type SwatchResolver = (swatch: string) => string;

export function dataUrlToBase64(url: string): string {
  const m = /^data:image\/png;base64,(.+)$/.exec(url);
  if (!m) throw new Error("swatch is not a PNG data URL");
  return m[1];
}

export function documentToDTO(doc: CanvasDocument, resolveSwatch: SwatchResolver): SynthesizeDTO {
  const mask = rasterizeStrokes(doc.strokes, doc.resolution);
  const sketch = toBase64(encodePng(mask, doc.resolution, doc.resolution, 1));
  return {
    sketch,
    texture_patches: doc.texture_placements.map((p) => ({
      image: resolveSwatch(p.swatch),
      ...p.rect,
    })),
    color_patches: doc.color_placements.map((p) => ({ rgb: p.rgb, ...p.rect })),
    resolution: doc.resolution,
  };
}

// --- import / export -------------------------------------------------------

export function exportDocument(doc: CanvasDocument): string {
  return JSON.stringify(doc, null, 2);
}

export type ImportResult =
  | { ok: true; doc: CanvasDocument; needsResize: false }
  | { ok: true; doc: CanvasDocument; needsResize: true; supported: number[] }
  | { ok: false; error: string };

export function importDocument(json: string, supportedResolutions: number[]): ImportResult {
  let raw: unknown;
  try {
    raw = JSON.parse(json);
  } catch (err) {
    return { ok: false, error: `not valid JSON: ${(err as Error).message}` };
  }
  const parsed = documentSchema.safeParse(raw);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    return { ok: false, error: `document schema mismatch at ${issue.path.join(".")}: ${issue.message}` };
  }
  const doc = parsed.data as CanvasDocument;
  for (const p of [...doc.texture_placements, ...doc.color_placements]) {
    if (!rectInBounds(p.rect, doc.resolution)) {
      return { ok: false, error: `placement (${p.rect.x},${p.rect.y},${p.rect.w},${p.rect.h}) is out of bounds` };
    }
  }
  if (!supportedResolutions.includes(doc.resolution)) {
    return { ok: true, doc, needsResize: true, supported: supportedResolutions };
  }
  return { ok: true, doc, needsResize: false };
}

/** Rescale every coordinate in the document to a new resolution. */
export function resizeDocument(doc: CanvasDocument, resolution: number): CanvasDocument {
  const s = resolution / doc.resolution;
  const rect = (r: Rect): Rect =>
    clampRect(
      { x: Math.round(r.x * s), y: Math.round(r.y * s), w: Math.max(1, Math.round(r.w * s)), h: Math.max(1, Math.round(r.h * s)) },
      resolution,
    );
  return {
    version: doc.version,
    resolution,
    strokes: doc.strokes.map((st) => st.map((p) => ({ x: p.x * s, y: p.y * s }))),
    texture_placements: doc.texture_placements.map((p) => ({ swatch: p.swatch, rect: rect(p.rect) })),
    color_placements: doc.color_placements.map((p) => ({ rgb: p.rgb, rect: rect(p.rect) })),
  };
}
