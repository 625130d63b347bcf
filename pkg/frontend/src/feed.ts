/** Seq-ordered event feed: a ring buffer that mirrors the server stream.
 *
 * The gateway assigns strictly increasing sequence numbers within an
 * epoch; the feed preserves that order, drops duplicates (reconnect
 * replays), and keeps only the newest `capacity` records.
 */

import type { FeedRecord, StreamPayload } from "./types.js";

export const FEED_CAPACITY = 500;

export class EventFeed {
  private records: FeedRecord[] = [];
  readonly capacity: number;

  constructor(capacity: number = FEED_CAPACITY) {
    this.capacity = capacity;
  }

  /** Highest sequence seen; resume subscriptions from here. */
  get lastSeq(): number {
    return this.records.length ? this.records[this.records.length - 1].seq : 0;
  }

  get size(): number {
    return this.records.length;
  }

  /** Newest first, for display. */
  get newestFirst(): FeedRecord[] {
    return [...this.records].reverse();
  }

  get inOrder(): FeedRecord[] {
    return [...this.records];
  }

  /** Absorb one stream record; out-of-order or duplicate seqs are ignored. */
  push(seq: number, payload: StreamPayload): boolean {
    if (seq <= this.lastSeq) {
      return false;
    }
    this.records.push({ seq, payload });
    if (this.records.length > this.capacity) {
      this.records.splice(0, this.records.length - this.capacity);
    }
    return true;
  }

  /** Epoch changed server-side: stale sequence numbers mean nothing now. */
  reset(): void {
    this.records = [];
  }
}

/** Parse one SSE data line into a typed payload.
 *
 * Wire-protocol messages carry a "type" tag; care-event lines carry
 * "kind". Anything else is rejected.
 */
export function parseStreamLine(data: string): StreamPayload {
  let obj: unknown;
  try {
    obj = JSON.parse(data);
  } catch {
    throw new Error(`unparseable stream line: ${data.slice(0, 80)}`);
  }
  if (typeof obj !== "object" || obj === null) {
    throw new Error("stream line is not an object");
  }
  const rec = obj as Record<string, unknown>;
  if (rec.type === "telemetry" || rec.type === "motion") {
    return rec as unknown as StreamPayload;
  }
  if (typeof rec.kind === "string") {
    return rec as unknown as StreamPayload;
  }
  throw new Error(`unknown stream payload: ${data.slice(0, 80)}`);
}

export function describePayload(payload: StreamPayload): string {
  if ("type" in payload && payload.type === "telemetry") {
    return `telemetry ${payload.device}: ${payload.mode} ${payload.phase} ` +
      `${payload.freq_hz} Hz, ${payload.remaining_s.toFixed(1)} s left`;
  }
  if ("type" in payload && payload.type === "motion") {
    return `motion ${payload.camera}: score ${payload.score.toFixed(4)} at ${payload.ts}`;
  }
  const care = payload as { kind: string; trial_id: string; payload: string };
  return `care ${care.kind} (trial ${care.trial_id})` +
    (care.payload ? `: ${care.payload}` : "");
}
