// Freehand strokes -> binary sketch mask. The wire convention is white
// strokes (255) on a black (0) background; the server thresholds at 50%.

import type { Point } from "./document.js";

export function rasterizeStrokes(
  strokes: Point[][],
  resolution: number,
  brushRadius = 1,
): Uint8Array {
  const mask = new Uint8Array(resolution * resolution);
  const stamp = (cx: number, cy: number) => {
    const r = brushRadius;
    for (let dy = -r; dy <= r; dy++) {
      for (let dx = -r; dx <= r; dx++) {
        if (dx * dx + dy * dy > r * r) continue;
        const x = Math.round(cx + dx);
        const y = Math.round(cy + dy);
        if (x >= 0 && x < resolution && y >= 0 && y < resolution) {
          mask[y * resolution + x] = 255;
        }
      }
    }
  };
  for (const stroke of strokes) {
    if (stroke.length === 0) continue;
    stamp(stroke[0].x, stroke[0].y);
    for (let i = 1; i < stroke.length; i++) {
      const a = stroke[i - 1];
      const b = stroke[i];
      const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        stamp(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
      }
    }
  }
  return mask;
}

export function strokeCount(mask: Uint8Array): number {
  let n = 0;
  for (const v of mask) if (v > 0) n++;
  return n;
}
