// Studio app: draw a sketch, drag texture swatches and color patches onto
// it, and watch the synthesized preview update live.

import { PreviewClient } from "./client.js";
import {
  CanvasDocument,
  ColorPlacement,
  Rect,
  TexturePlacement,
  clampRect,
  dataUrlToBase64,
  documentToDTO,
  emptyDocument,
  exportDocument,
  importDocument,
  rectInBounds,
  resizeDocument,
} from "./document.js";
import { builtinSwatches } from "./textures.js";

const SUPPORTED_RESOLUTIONS = [64, 128, 256];
const DEFAULT_SWATCH_RECT = 48;

// --- state -------------------------------------------------------------

let doc: CanvasDocument = emptyDocument(128);
const uploads = new Map<string, string>(); // upload id -> base64 png
const palette = builtinSwatches();
let activeSwatch = palette[0].id;
let tool: "draw" | "texture" | "color" = "draw";
let activeColor = "#cc3333";
let currentStroke: { x: number; y: number }[] | undefined;
let dragRect: Rect | undefined;
const bus = new EventTarget();
const changed = () => bus.dispatchEvent(new Event("document-changed"));

function resolveSwatch(ref: string): string {
  if (ref.startsWith("data:")) return dataUrlToBase64(ref);
  const uploaded = uploads.get(ref);
  if (uploaded) return uploaded;
  const builtin = palette.find((s) => s.id === ref);
  if (!builtin) throw new Error(`unknown swatch ${ref}`);
  return builtin.png;
}

// --- layout --------------------------------------------------------------

document.body.innerHTML = `
  <style>
    body { font-family: system-ui, sans-serif; margin: 1rem; background: #f4f4f4; }
    h1 { font-size: 1.2rem; margin: 0 0 .5rem; }
    .row { display: flex; gap: 1rem; align-items: flex-start; flex-wrap: wrap; }
    canvas.board { border: 1px solid #888; background: #000; image-rendering: pixelated; width: 384px; height: 384px; touch-action: none; }
    img.preview { border: 1px solid #888; width: 384px; height: 384px; image-rendering: pixelated; background: #fff; }
    .palette { display: flex; flex-direction: column; gap: .4rem; }
    .palette canvas { border: 2px solid transparent; cursor: grab; width: 48px; height: 48px; }
    .palette canvas.active { border-color: #0a6; }
    .controls { display: flex; gap: .5rem; margin: .5rem 0; flex-wrap: wrap; align-items: center; }
    #banner { display: none; background: #ffdddd; border: 1px solid #c00; padding: .4rem .6rem; margin: .5rem 0; }
    #banner button { margin-left: .6rem; }
    .hint { color: #555; font-size: .85rem; max-width: 48rem; }
  </style>
  <h1>Texture Studio</h1>
  <div class="controls">
    <label>tool:
      <select id="tool">
        <option value="draw">draw strokes</option>
        <option value="texture">place texture</option>
        <option value="color">place color</option>
      </select>
    </label>
    <label>color: <input type="color" id="color" value="#cc3333"></label>
    <label>resolution:
      <select id="resolution">${SUPPORTED_RESOLUTIONS.map((r) => `<option ${r === 128 ? "selected" : ""}>${r}</option>`).join("")}</select>
    </label>
    <button id="clear">Clear</button>
    <button id="export">Export</button>
    <button id="import">Import</button>
    <input type="file" id="importFile" accept="application/json" hidden>
    <label>upload swatch <input type="file" id="uploadSwatch" accept="image/png" hidden></label>
    <button id="uploadBtn">Upload swatch</button>
    <label>service: <input id="baseUrl" value="http://127.0.0.1:8500" size="24"></label>
  </div>
  <div id="banner"><span id="bannerText"></span><button id="retry">Retry</button></div>
  <div class="row">
    <div class="palette" id="palette"></div>
    <canvas class="board" id="board"></canvas>
    <img class="preview" id="preview" alt="synthesis preview">
  </div>
  <p class="hint">Draw white strokes to outline an object, then drag texture
  swatches and color rectangles inside it. The preview re-renders after each
  edit; stale responses are discarded.</p>
`;

const board = document.getElementById("board") as HTMLCanvasElement;
const ctx = board.getContext("2d")!;
const preview = document.getElementById("preview") as HTMLImageElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const bannerText = document.getElementById("bannerText") as HTMLSpanElement;
const retryBtn = document.getElementById("retry") as HTMLButtonElement;

let lastRetry: (() => void) | undefined;
const client = new PreviewClient(
  (document.getElementById("baseUrl") as HTMLInputElement).value,
  {
    onPreview: (blob) => {
      banner.style.display = "none";
      const url = URL.createObjectURL(blob);
      const old = preview.src;
      preview.src = url;
      if (old.startsWith("blob:")) URL.revokeObjectURL(old);
    },
    onError: (message, retry) => {
      bannerText.textContent = message;
      lastRetry = retry;
      banner.style.display = "block";
    },
  },
);
retryBtn.addEventListener("click", () => {
  banner.style.display = "none";
  lastRetry?.();
});

// --- palette -------------------------------------------------------------

function renderPalette() {
  const host = document.getElementById("palette")!;
  host.innerHTML = "";
  const entries = [
    ...palette.map((s) => ({ id: s.id, png: s.png, label: s.label })),
    ...[...uploads.entries()].map(([id, png]) => ({ id, png, label: id })),
  ];
  for (const entry of entries) {
    const c = document.createElement("canvas");
    c.width = c.height = 48;
    c.title = entry.label;
    if (entry.id === activeSwatch) c.classList.add("active");
    const img = new Image();
    img.onload = () => c.getContext("2d")!.drawImage(img, 0, 0, 48, 48);
    img.src = `data:image/png;base64,${entry.png}`;
    c.addEventListener("click", () => {
      activeSwatch = entry.id;
      tool = "texture";
      (document.getElementById("tool") as HTMLSelectElement).value = "texture";
      renderPalette();
    });
    host.append(c);
  }
}
renderPalette();

// --- board rendering -------------------------------------------------------

const swatchImages = new Map<string, HTMLImageElement>();

function swatchImage(ref: string): HTMLImageElement {
  let img = swatchImages.get(ref);
  if (!img) {
    img = new Image();
    img.onload = () => redraw();
    img.src = `data:image/png;base64,${resolveSwatch(ref)}`;
    swatchImages.set(ref, img);
  }
  return img;
}

function redraw() {
  const res = doc.resolution;
  board.width = res;
  board.height = res;
  ctx.fillStyle = "#000";
  ctx.fillRect(0, 0, res, res);
  for (const p of doc.texture_placements) {
    const img = swatchImage(p.swatch);
    if (img.complete && img.naturalWidth) {
      ctx.globalAlpha = 0.9;
      ctx.drawImage(img, p.rect.x, p.rect.y, p.rect.w, p.rect.h);
      ctx.globalAlpha = 1.0;
    }
    ctx.strokeStyle = "#0a6";
    ctx.strokeRect(p.rect.x + 0.5, p.rect.y + 0.5, p.rect.w - 1, p.rect.h - 1);
  }
  for (const p of doc.color_placements) {
    ctx.fillStyle = p.rgb + "66";
    ctx.fillRect(p.rect.x, p.rect.y, p.rect.w, p.rect.h);
    ctx.strokeStyle = p.rgb;
    ctx.strokeRect(p.rect.x + 0.5, p.rect.y + 0.5, p.rect.w - 1, p.rect.h - 1);
  }
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 2;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  const paths = currentStroke ? [...doc.strokes, currentStroke] : doc.strokes;
  for (const stroke of paths) {
    if (stroke.length < 2) continue;
    ctx.beginPath();
    ctx.moveTo(stroke[0].x, stroke[0].y);
    for (const p of stroke.slice(1)) ctx.lineTo(p.x, p.y);
    ctx.stroke();
  }
  if (dragRect) {
    ctx.strokeStyle = "#ff0";
    ctx.strokeRect(dragRect.x + 0.5, dragRect.y + 0.5, dragRect.w, dragRect.h);
  }
}

// --- synthesis -------------------------------------------------------------

bus.addEventListener("document-changed", () => {
  redraw();
  client.baseUrl = (document.getElementById("baseUrl") as HTMLInputElement).value;
  try {
    client.request(documentToDTO(doc, resolveSwatch));
  } catch (err) {
    bannerText.textContent = (err as Error).message;
    banner.style.display = "block";
  }
});

// --- pointer handling --------------------------------------------------------

function boardPoint(ev: PointerEvent): { x: number; y: number } {
  const r = board.getBoundingClientRect();
  return {
    x: ((ev.clientX - r.left) / r.width) * doc.resolution,
    y: ((ev.clientY - r.top) / r.height) * doc.resolution,
  };
}

board.addEventListener("pointerdown", (ev) => {
  board.setPointerCapture(ev.pointerId);
  const p = boardPoint(ev);
  if (tool === "draw") {
    currentStroke = [p];
  } else {
    dragRect = { x: Math.round(p.x), y: Math.round(p.y), w: 1, h: 1 };
  }
  redraw();
});

board.addEventListener("pointermove", (ev) => {
  if (currentStroke) {
    currentStroke.push(boardPoint(ev));
    redraw();
  } else if (dragRect) {
    const p = boardPoint(ev);
    dragRect.w = Math.max(1, Math.round(p.x) - dragRect.x);
    dragRect.h = Math.max(1, Math.round(p.y) - dragRect.y);
    redraw();
  }
});

board.addEventListener("pointerup", () => {
  if (currentStroke) {
    if (currentStroke.length > 1) doc.strokes.push(currentStroke);
    currentStroke = undefined;
    changed();
  } else if (dragRect) {
    let rect = dragRect;
    dragRect = undefined;
    if (rect.w < 4 || rect.h < 4) {
      rect = { x: rect.x, y: rect.y, w: DEFAULT_SWATCH_RECT, h: DEFAULT_SWATCH_RECT };
    }
    rect = clampRect(rect, doc.resolution);
    if (rectInBounds(rect, doc.resolution)) {
      if (tool === "texture") {
        doc.texture_placements.push({ swatch: activeSwatch, rect } as TexturePlacement);
      } else {
        doc.color_placements.push({ rgb: activeColor, rect } as ColorPlacement);
      }
    }
    changed();
  }
});

// --- controls ---------------------------------------------------------------

(document.getElementById("tool") as HTMLSelectElement).addEventListener("change", (ev) => {
  tool = (ev.target as HTMLSelectElement).value as typeof tool;
});
(document.getElementById("color") as HTMLInputElement).addEventListener("input", (ev) => {
  activeColor = (ev.target as HTMLInputElement).value;
  tool = "color";
  (document.getElementById("tool") as HTMLSelectElement).value = "color";
});
(document.getElementById("resolution") as HTMLSelectElement).addEventListener("change", (ev) => {
  doc = resizeDocument(doc, parseInt((ev.target as HTMLSelectElement).value, 10));
  changed();
});
(document.getElementById("clear") as HTMLButtonElement).addEventListener("click", () => {
  doc = emptyDocument(doc.resolution);
  changed();
});

(document.getElementById("export") as HTMLButtonElement).addEventListener("click", () => {
  const blob = new Blob([exportDocument(doc)], { type: "application/json" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "studio-document.json";
  a.click();
  URL.revokeObjectURL(a.href);
});

const importFile = document.getElementById("importFile") as HTMLInputElement;
(document.getElementById("import") as HTMLButtonElement).addEventListener("click", () =>
  importFile.click(),
);
importFile.addEventListener("change", async () => {
  const file = importFile.files?.[0];
  if (!file) return;
  const result = importDocument(await file.text(), SUPPORTED_RESOLUTIONS);
  if (!result.ok) {
    bannerText.textContent = result.error;
    banner.style.display = "block";
    return;
  }
  if (result.needsResize) {
    const target = SUPPORTED_RESOLUTIONS.reduce((a, b) =>
      Math.abs(b - result.doc.resolution) < Math.abs(a - result.doc.resolution) ? b : a,
    );
    if (!confirm(`document resolution ${result.doc.resolution} is unsupported; resize to ${target}?`)) {
      return;
    }
    doc = resizeDocument(result.doc, target);
  } else {
    doc = result.doc;
  }
  (document.getElementById("resolution") as HTMLSelectElement).value = String(doc.resolution);
  changed();
});

const uploadInput = document.getElementById("uploadSwatch") as HTMLInputElement;
(document.getElementById("uploadBtn") as HTMLButtonElement).addEventListener("click", () =>
  uploadInput.click(),
);
uploadInput.addEventListener("change", async () => {
  const file = uploadInput.files?.[0];
  if (!file) return;
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  bytes.forEach((b) => (binary += String.fromCharCode(b)));
  const id = `upload:${file.name}`;
  uploads.set(id, btoa(binary));
  activeSwatch = id;
  renderPalette();
});

// initial paint + first stub render
changed();
