// Slider-to-inference controller: 50 ms debounce, at most one in-flight
// request, latest-wins by sequence number. Pure logic; the network call,
// render sink, and timer are injected so tests can drive it synchronously.

import type { InferResult } from "./api.js";

export interface ControllerSinks {
  render(result: InferResult): void;
  onError(message: string): void;
}

export interface ControllerOptions {
  infer(q: number, resolution: number[]): Promise<InferResult>;
  resolution: number[];
  debounceMs?: number;
  setTimer?(fn: () => void, ms: number): unknown;
  clearTimer?(handle: unknown): void;
}

export class ExplorerController {
  private seq = 0;
  private rendered = 0;
  private timer: unknown = null;
  private inflight = false;
  private pendingQ: number | null = null;
  private readonly debounceMs: number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  constructor(private readonly opts: ControllerOptions,
              private readonly sinks: ControllerSinks) {
    this.debounceMs = opts.debounceMs ?? 50;
    this.setTimer = opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = opts.clearTimer ?? ((h) => clearTimeout(h as number));
  }

  /** Called on every slider movement. */
  onSlider(q: number): void {
    if (this.timer !== null) this.clearTimer(this.timer);
    this.timer = this.setTimer(() => {
      this.timer = null;
      this.request(q);
    }, this.debounceMs);
  }

  /** Immediate request (initial load). */
  request(q: number): void {
    if (this.inflight) {
      this.pendingQ = q; // queue; only the newest queued value survives
      return;
    }
    const seq = ++this.seq;
    this.inflight = true;
    this.opts.infer(q, this.opts.resolution).then(
      (result) => this.settle(seq, result, null),
      (err) => this.settle(seq, null, String(err)),
    );
  }

  private settle(seq: number, result: InferResult | null,
                 error: string | null): void {
    this.inflight = false;
    if (result !== null && seq > this.rendered) {
      this.rendered = seq;
      this.sinks.render(result);
    } else if (error !== null) {
      this.sinks.onError(error);
    }
    if (this.pendingQ !== null) {
      const q = this.pendingQ;
      this.pendingQ = null;
      this.request(q);
    }
  }
}
