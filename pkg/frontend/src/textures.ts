// Bundled swatch palette: procedural textures rendered to PNG base64 at
// load time, so the server stays stateless and uploads embed the same way.

import { encodePng, toBase64 } from "./png.js";

export interface Swatch {
  id: string;
  label: string;
  /** base64 PNG without data-url prefix */
  png: string;
}

const SWATCH_SIZE = 48;

function pattern(fill: (x: number, y: number) => number): Uint8Array {
  const px = new Uint8Array(SWATCH_SIZE * SWATCH_SIZE);
  for (let y = 0; y < SWATCH_SIZE; y++) {
    for (let x = 0; x < SWATCH_SIZE; x++) {
      px[y * SWATCH_SIZE + x] = fill(x, y);
    }
  }
  return px;
}

function stripes(period: number, angleDeg: number): Uint8Array {
  const t = (angleDeg * Math.PI) / 180;
  return pattern((x, y) => {
    const u = x * Math.cos(t) + y * Math.sin(t);
    return ((u % period) + period) % period < period / 2 ? 230 : 50;
  });
}

function dots(period: number): Uint8Array {
  return pattern((x, y) => {
    const du = (x % period) - period / 2;
    const dv = (y % period) - period / 2;
    return Math.hypot(du, dv) < period / 4 ? 40 : 220;
  });
}

function checkers(period: number): Uint8Array {
  return pattern((x, y) =>
    (Math.floor(x / period) + Math.floor(y / period)) % 2 === 0 ? 210 : 60,
  );
}

function swatch(id: string, label: string, px: Uint8Array): Swatch {
  return { id, label, png: toBase64(encodePng(px, SWATCH_SIZE, SWATCH_SIZE, 1)) };
}

export function builtinSwatches(): Swatch[] {
  return [
    swatch("stripes-v", "Stripes |", stripes(10, 0)),
    swatch("stripes-d", "Stripes /", stripes(10, 45)),
    swatch("stripes-h", "Stripes -", stripes(12, 90)),
    swatch("dots", "Dots", dots(12)),
    swatch("checkers", "Checkers", checkers(8)),
  ];
}
