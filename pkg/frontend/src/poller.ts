/** Live-mode polling loop: submit the current frame at a fixed interval,
 * never queueing — when a request is still in flight the tick is dropped. */

import { ApiClient, EvaluateResponse } from "./api.js";

export interface PollerCallbacks {
  onResponse: (response: EvaluateResponse) => void;
  /** Called when a poll fails; the loop keeps running and the UI shows stale data. */
  onError?: (error: unknown) => void;
}

export type FrameSource = () => Promise<Blob> | Blob;

export class LivePoller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private busy = false;
  /** ticks skipped because the previous request was still in flight */
  dropped = 0;
  /** true after a failed poll until the next success */
  stale = false;

  constructor(
    private readonly client: ApiClient,
    private readonly frameSource: FrameSource,
    private readonly callbacks: PollerCallbacks,
    readonly intervalMs: number = 500,
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  get inFlight(): boolean {
    return this.busy;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async tick(): Promise<void> {
    if (this.busy) {
      this.dropped += 1;
      return;
    }
    this.busy = true;
    try {
      const frame = await this.frameSource();
      const response = await this.client.evaluate(frame);
      this.stale = false;
      this.callbacks.onResponse(response);
    } catch (err) {
      this.stale = true;
      this.callbacks.onError?.(err);
    } finally {
      this.busy = false;
    }
  }
}
