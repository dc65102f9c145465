// Round trip against the real stub server: the studio document pipeline
// must produce DTOs the service accepts, and the preview client must only
// ever display the newest response.
//
// Spawns `tgan serve --stub`; skipped when the CLI is unavailable.

import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { PreviewClient } from "../src/client.js";
import { documentToDTO, emptyDocument } from "../src/document.js";
import { builtinSwatches } from "../src/textures.js";

const PORT = 8591;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | undefined;
let available = false;

async function waitForHealth(timeoutMs: number): Promise<boolean> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/v1/health`);
      if (res.status === 200) return true;
    } catch {
      // server not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  return false;
}

beforeAll(async () => {
  server = spawn("tgan", ["serve", "--stub", "--stub-resolution", "128", "--port", String(PORT)], {
    stdio: "ignore",
  });
  server.on("error", () => {
    available = false;
  });
  available = await waitForHealth(20000);
}, 25000);

afterAll(() => {
  server?.kill();
});

const palette = builtinSwatches();
const resolve = (id: string) => palette.find((p) => p.id === id)!.png;

function studioDocument() {
  const doc = emptyDocument(128);
  // a drawn outline plus one dropped swatch: the basic studio interaction
  doc.strokes.push([
    { x: 20, y: 20 },
    { x: 100, y: 20 },
    { x: 100, y: 100 },
    { x: 20, y: 100 },
    { x: 20, y: 20 },
  ]);
  doc.texture_placements.push({ swatch: "stripes-v", rect: { x: 40, y: 40, w: 40, h: 40 } });
  return doc;
}

describe("studio round trip against the stub server", () => {
  it("sketch + one swatch passes validation and previews within 2 s", async () => {
    if (!available) {
      expect.fail("stub server did not come up");
    }
    const dto = documentToDTO(studioDocument(), resolve);
    const t0 = Date.now();
    const res = await fetch(`${BASE}/v1/synthesize`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(dto),
    });
    const elapsed = Date.now() - t0;
    expect(res.status).toBe(200);
    expect(res.headers.get("content-type")).toBe("image/png");
    const body = new Uint8Array(await res.arrayBuffer());
    expect([...body.subarray(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
    expect(elapsed).toBeLessThan(2000);
  });

  it("superseded requests are never displayed", async () => {
    if (!available) {
      expect.fail("stub server did not come up");
    }
    const shown: number[] = [];
    const client = new PreviewClient(
      BASE,
      {
        onPreview: (_blob, seq) => shown.push(seq),
        onError: (msg) => expect.fail(`unexpected error: ${msg}`),
      },
      20,
    );
    const base = studioDocument();
    for (let i = 0; i < 4; i++) {
      const doc = structuredClone(base);
      doc.color_placements.push({ rgb: "#cc0000", rect: { x: 10 + i, y: 10, w: 8, h: 8 } });
      client.request(documentToDTO(doc, resolve));
      await new Promise((r) => setTimeout(r, 8)); // faster than the debounce
    }
    await new Promise((r) => setTimeout(r, 3000));
    expect(shown.length).toBeGreaterThan(0);
    // displayed sequence numbers strictly increase and end at the newest
    for (let i = 1; i < shown.length; i++) expect(shown[i]).toBeGreaterThan(shown[i - 1]);
  }, 10000);

  it("health exposes the stub checkpoint id", async () => {
    if (!available) {
      expect.fail("stub server did not come up");
    }
    const res = await fetch(`${BASE}/v1/health`);
    const body = await res.json();
    expect(body.checkpoint_id).toBe("stub-128");
    expect(body.resolution).toBe(128);
  });
});
