// Preview client: debounced POST /v1/synthesize with last-response-wins
// display. At most one request is in flight; firing a newer one aborts the
// older, and responses carry sequence numbers so a stale response is never
// delivered.

import type { SynthesizeDTO } from "./document.js";

export interface HealthInfo {
  status: string;
  checkpoint_id: string;
  resolution: number;
}

export interface PreviewHandlers {
  onPreview: (pngBlob: Blob, seq: number) => void;
  onError: (message: string, retry: () => void) => void;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class PreviewClient {
  private seq = 0;
  private delivered = 0;
  private timer: ReturnType<typeof setTimeout> | undefined;
  private controller: AbortController | undefined;
  private pendingDto: SynthesizeDTO | undefined;
  /** in-flight request count, observable by tests */
  inflight = 0;

  constructor(
    public baseUrl: string,
    private handlers: PreviewHandlers,
    private debounceMs = 300,
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  async health(): Promise<HealthInfo> {
    const res = await this.fetchFn(`${this.baseUrl}/v1/health`);
    if (!res.ok) throw new Error(`service not ready (${res.status})`);
    return (await res.json()) as HealthInfo;
  }

  /** Schedule a synthesis for the given DTO, superseding older requests. */
  request(dto: SynthesizeDTO): void {
    this.pendingDto = dto;
    if (this.timer !== undefined) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = undefined;
      void this.fire();
    }, this.debounceMs);
  }

  /** Send immediately (used by the retry button and tests). */
  async fire(): Promise<void> {
    if (!this.pendingDto) return;
    const dto = this.pendingDto;
    this.pendingDto = undefined;
    const seq = ++this.seq;
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    this.inflight++;
    try {
      const res = await this.fetchFn(`${this.baseUrl}/v1/synthesize`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(dto),
        signal: controller.signal,
      });
      if (seq <= this.delivered) return; // a newer response already landed
      if (!res.ok) {
        const detail = await res.text();
        this.handlers.onError(
          `synthesis failed (${res.status}): ${detail.slice(0, 200)}`,
          () => {
            this.pendingDto = dto;
            void this.fire();
          },
        );
        return;
      }
      const blob = await res.blob();
      if (seq <= this.delivered) return;
      this.delivered = seq;
      this.handlers.onPreview(blob, seq);
    } catch (err) {
      if ((err as Error).name === "AbortError") return; // superseded
      this.handlers.onError(`service unreachable: ${(err as Error).message}`, () => {
        this.pendingDto = dto;
        void this.fire();
      });
    } finally {
      this.inflight--;
    }
  }
}
