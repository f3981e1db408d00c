// SSE client with cursor resume. Implemented over fetch + ReadableStream so
// the transport is injectable; reconnects always pass the last seen seq as
// the cursor, and a monotonic filter makes delivery loss- and duplicate-free
// across any number of reconnects.

import type { FetchLike } from './api';
import type { SessionEvent } from './types';

export interface EventStreamOptions {
  fetchImpl?: FetchLike;
  /** initial cursor; events with seq <= cursor are never delivered */
  cursor?: number;
  /** delay between reconnect attempts (ms) */
  retryDelayMs?: number;
  /** stop reconnecting after the stream ends this many times with no data */
  maxIdleReconnects?: number;
}

export class EventStream {
  private lastSeq: number;
  private stopped = false;
  private listeners: ((event: SessionEvent) => void)[] = [];
  private closers: ((reason: string) => void)[] = [];
  private fetchImpl: FetchLike;
  private retryDelayMs: number;
  private maxIdleReconnects: number;
  private activeReader: ReadableStreamDefaultReader<Uint8Array> | null = null;

  constructor(
    private urlFor: (cursor: number) => string,
    options: EventStreamOptions = {},
  ) {
    this.lastSeq = options.cursor ?? 0;
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
    this.retryDelayMs = options.retryDelayMs ?? 500;
    this.maxIdleReconnects = options.maxIdleReconnects ?? 3;
  }

  get cursor(): number {
    return this.lastSeq;
  }

  onEvent(listener: (event: SessionEvent) => void): void {
    this.listeners.push(listener);
  }

  onClose(listener: (reason: string) => void): void {
    this.closers.push(listener);
  }

  close(): void {
    this.stopped = true;
    // Unblock a reader parked on a quiet stream.
    void this.activeReader?.cancel().catch(() => undefined);
  }

  /** Runs until close() or the idle-reconnect budget is spent. */
  async run(): Promise<void> {
    let idleRounds = 0;
    while (!this.stopped && idleRounds <= this.maxIdleReconnects) {
      let delivered = 0;
      try {
        delivered = await this.consumeOnce();
      } catch {
        // transient transport failure; fall through to reconnect
      }
      if (this.stopped) break;
      idleRounds = delivered > 0 ? 0 : idleRounds + 1;
      if (idleRounds <= this.maxIdleReconnects) {
        await sleep(this.retryDelayMs);
      }
    }
    for (const closer of this.closers) closer(this.stopped ? 'closed' : 'idle');
  }

  /** One connection; returns the number of events delivered. */
  private async consumeOnce(): Promise<number> {
    const response = await this.fetchImpl(this.urlFor(this.lastSeq));
    if (!response.ok || response.body === null) {
      throw new Error(`event stream unavailable (${response.status})`);
    }
    const reader = response.body.getReader();
    this.activeReader = reader;
    const decoder = new TextDecoder();
    let buffer = '';
    let delivered = 0;
    while (!this.stopped) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let boundary: number;
      while ((boundary = buffer.indexOf('\n\n')) !== -1) {
        const frame = buffer.slice(0, boundary);
        buffer = buffer.slice(boundary + 2);
        const event = parseFrame(frame);
        if (event !== null && event.seq > this.lastSeq) {
          this.lastSeq = event.seq;
          delivered += 1;
          for (const listener of this.listeners) listener(event);
        }
      }
    }
    this.activeReader = null;
    if (this.stopped) {
      await reader.cancel().catch(() => undefined);
    }
    return delivered;
  }
}

export function parseFrame(frame: string): SessionEvent | null {
  const dataLines = frame
    .split('\n')
    .filter((line) => line.startsWith('data: '))
    .map((line) => line.slice('data: '.length));
  if (dataLines.length === 0) return null;
  try {
    return JSON.parse(dataLines.join('\n')) as SessionEvent;
  } catch {
    return null;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
