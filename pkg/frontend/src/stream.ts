import { SseParser } from "./sse.js";
import type { FetchLike, Frame } from "./types.js";

export interface StreamHooks {
  onFrame(frame: Frame): void;
  /** Fired after the stream connects, before any frame. The app resyncs
   * its snapshot here; the server replays current state as a prelude. */
  onConnect(): void;
  onDrop(retryMs: number): void;
  onHeartbeatMissed(): void;
}

export interface StreamOptions {
  fetchFn?: FetchLike;
  heartbeatSeconds?: number;
  maxBackoffMs?: number;
  schedule?: (fn: () => void, ms: number) => unknown;
  cancel?: (handle: unknown) => void;
}

const INITIAL_BACKOFF_MS = 1_000;

/**
 * Owns the single event-stream connection.
 *
 * Reconnects with exponential backoff after a drop and watches for
 * heartbeat frames; a silent wire past 1.5x the heartbeat interval
 * raises onHeartbeatMissed once per missed beat.
 */
export class StreamManager {
  private readonly fetchFn: FetchLike;
  private readonly heartbeatMs: number;
  private readonly maxBackoffMs: number;
  private readonly schedule: (fn: () => void, ms: number) => unknown;
  private readonly cancel: (handle: unknown) => void;

  private controller: AbortController | null = null;
  private watchdog: unknown = null;
  private running = false;

  constructor(
    private readonly baseUrl: string,
    private readonly hooks: StreamHooks,
    opts: StreamOptions = {},
  ) {
    this.fetchFn = opts.fetchFn ?? fetch;
    this.heartbeatMs = (opts.heartbeatSeconds ?? 15) * 1_000;
    this.maxBackoffMs = opts.maxBackoffMs ?? 30_000;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancel = opts.cancel ?? ((handle) => clearTimeout(handle as never));
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    void this.run();
  }

  stop(): void {
    this.running = false;
    this.disarmWatchdog();
    this.controller?.abort();
    this.controller = null;
  }

  private async run(): Promise<void> {
    let backoffMs = INITIAL_BACKOFF_MS;
    while (this.running) {
      let connected = false;
      try {
        connected = await this.connectOnce();
      } catch {
        // fall through to the retry path
      }
      this.disarmWatchdog();
      if (!this.running) return;
      if (connected) backoffMs = INITIAL_BACKOFF_MS;
      this.hooks.onDrop(backoffMs);
      await this.sleep(backoffMs);
      backoffMs = Math.min(backoffMs * 2, this.maxBackoffMs);
    }
  }

  /** Returns true once the response arrived, even if the body later broke. */
  private async connectOnce(): Promise<boolean> {
    this.controller = new AbortController();
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/stream`, {
      signal: this.controller.signal,
      headers: { accept: "text/event-stream" },
    });
    if (!resp.ok || !resp.body) return false;
    this.hooks.onConnect();
    this.armWatchdog();
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
          this.armWatchdog();
          this.hooks.onFrame(frame);
        }
      }
    } finally {
      reader.releaseLock();
    }
    return true;
  }

  private armWatchdog(): void {
    this.disarmWatchdog();
    this.watchdog = this.schedule(() => {
      this.hooks.onHeartbeatMissed();
      this.armWatchdog();
    }, this.heartbeatMs * 1.5);
  }

  private disarmWatchdog(): void {
    if (this.watchdog !== null) {
      this.cancel(this.watchdog);
      this.watchdog = null;
    }
  }

  private sleep(ms: number): Promise<void> {
    return new Promise((resolve) => {
      this.schedule(resolve, ms);
    });
  }
}
