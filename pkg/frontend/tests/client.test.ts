import { describe, expect, it, vi } from "vitest";
import { PreviewClient } from "../src/client.js";
import type { SynthesizeDTO } from "../src/document.js";

const dto = (n: number): SynthesizeDTO => ({
  sketch: `sketch-${n}`,
  texture_patches: [],
  color_patches: [],
  resolution: 64,
});

function pngResponse(tag: string): Response {
  return new Response(new Blob([tag], { type: "image/png" }), { status: 200 });
}

describe("PreviewClient", () => {
  it("debounces rapid edits into one request", async () => {
    vi.useFakeTimers();
    const fetchFn = vi.fn(async () => pngResponse("a"));
    const previews: number[] = [];
    const client = new PreviewClient(
      "http://x",
      { onPreview: (_b, seq) => previews.push(seq), onError: () => {} },
      100,
      fetchFn,
    );
    client.request(dto(1));
    client.request(dto(2));
    client.request(dto(3));
    expect(fetchFn).not.toHaveBeenCalled();
    await vi.advanceTimersByTimeAsync(150);
    expect(fetchFn).toHaveBeenCalledTimes(1);
    const body = JSON.parse((fetchFn.mock.calls[0] as any)[1].body);
    expect(body.sketch).toBe("sketch-3"); // latest edit wins
    expect(previews).toEqual([1]);
    vi.useRealTimers();
  });

  it("keeps at most one request in flight and aborts superseded ones", async () => {
    vi.useFakeTimers();
    let maxInflight = 0;
    const aborted: boolean[] = [];
    const fetchFn = vi.fn((_url: string, init?: RequestInit) => {
      return new Promise<Response>((resolve, reject) => {
        init?.signal?.addEventListener("abort", () => {
          aborted.push(true);
          reject(Object.assign(new Error("aborted"), { name: "AbortError" }));
        });
        setTimeout(() => resolve(pngResponse("x")), 1000);
      });
    });
    const client = new PreviewClient(
      "http://x",
      {
        onPreview: () => {},
        onError: () => {},
      },
      10,
      fetchFn as any,
    );
    client.request(dto(1));
    await vi.advanceTimersByTimeAsync(20);
    maxInflight = Math.max(maxInflight, client.inflight);
    client.request(dto(2));
    await vi.advanceTimersByTimeAsync(20);
    maxInflight = Math.max(maxInflight, client.inflight);
    expect(aborted).toEqual([true]); // first request cancelled
    await vi.advanceTimersByTimeAsync(2000);
    expect(fetchFn).toHaveBeenCalledTimes(2);
    vi.useRealTimers();
  });

  it("never displays a stale response", async () => {
    vi.useFakeTimers();
    const resolvers: ((r: Response) => void)[] = [];
    const fetchFn = vi.fn(
      () => new Promise<Response>((resolve) => resolvers.push(resolve)),
    );
    const shown: string[] = [];
    const client = new PreviewClient(
      "http://x",
      {
        onPreview: async (blob) => shown.push(await blob.text()),
        onError: () => {},
      },
      10,
      fetchFn as any,
    );
    client.request(dto(1));
    await vi.advanceTimersByTimeAsync(20);
    client.request(dto(2));
    await vi.advanceTimersByTimeAsync(20);
    expect(resolvers).toHaveLength(2);
    // newer response lands first; the older must be discarded
    resolvers[1](pngResponse("new"));
    await vi.advanceTimersByTimeAsync(1);
    resolvers[0](pngResponse("old"));
    await vi.advanceTimersByTimeAsync(1);
    await vi.runAllTimersAsync();
    expect(shown).toEqual(["new"]);
    vi.useRealTimers();
  });

  it("surfaces service errors with a retry hook", async () => {
    vi.useFakeTimers();
    let failures = 0;
    const fetchFn = vi.fn(async () => {
      if (failures++ === 0) {
        return new Response("boom", { status: 500 });
      }
      return pngResponse("ok");
    });
    const errors: string[] = [];
    let retryFn: (() => void) | undefined;
    const shown: string[] = [];
    const client = new PreviewClient(
      "http://x",
      {
        onPreview: async (blob) => shown.push(await blob.text()),
        onError: (msg, retry) => {
          errors.push(msg);
          retryFn = retry;
        },
      },
      10,
      fetchFn as any,
    );
    client.request(dto(1));
    await vi.runAllTimersAsync();
    expect(errors).toHaveLength(1);
    expect(errors[0]).toContain("500");
    retryFn!();
    await vi.runAllTimersAsync();
    expect(shown).toEqual(["ok"]);
    vi.useRealTimers();
  });
});
