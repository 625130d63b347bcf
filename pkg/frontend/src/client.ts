/** Gateway HTTP and event-stream client.
 *
 * REST calls go through fetch; the live feed uses an EventSource against
 * /events with resume-from-last-seq on every reconnect, so a dropped and
 * re-established subscription never duplicates a record. Both transports
 * are injectable for tests.
 */

import type { CommandAck, GatewayStatus, GuardDenial, TrialStatus } from "./types.js";

export interface EventSourceLike {
  onmessage: ((ev: { data: string; lastEventId: string }) => void) | null;
  onopen: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; text(): Promise<string> }>;

export class GuardDeniedError extends Error {
  readonly denial: GuardDenial;

  constructor(denial: GuardDenial) {
    super(denial.reason);
    this.denial = denial;
  }
}

export class GatewayError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

export class GatewayClient {
  readonly baseUrl: string;
  private fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: Parameters<FetchLike>[1]): Promise<string> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const body = await resp.text();
    if (resp.status === 403) {
      let denial: GuardDenial = { reason: body, phase: null };
      try {
        const parsed = JSON.parse(body);
        if (parsed.detail && typeof parsed.detail.reason === "string") {
          denial = parsed.detail;
        }
      } catch {
        // non-JSON 403 body: keep the raw text as the reason
      }
      throw new GuardDeniedError(denial);
    }
    if (resp.status >= 400) {
      throw new GatewayError(resp.status, body);
    }
    return body;
  }

  async status(): Promise<GatewayStatus> {
    return JSON.parse(await this.request("/status"));
  }

  async trials(): Promise<TrialStatus[]> {
    return JSON.parse(await this.request("/trials"));
  }

  /** Send a mode command. Guard refusals surface as GuardDeniedError. */
  async sendCommand(
    deviceId: string,
    action: "activate" | "stop",
    mode?: "swimming" | "begging",
  ): Promise<CommandAck> {
    const body = JSON.stringify(mode ? { action, mode } : { action });
    return JSON.parse(await this.request(
      `/devices/${encodeURIComponent(deviceId)}/command`,
      { method: "POST", headers: { "content-type": "application/json" }, body },
    ));
  }

  async characterizationCsv(fmin = 5, fmax = 28, step = 1): Promise<string> {
    return this.request(`/characterization?fmin=${fmin}&fmax=${fmax}&step=${step}`);
  }
}

export interface SubscriptionHooks {
  onRecord(seq: number, data: string): void;
  onOpen(): void;
  /** Called once per failed attempt with the wait before the next one. */
  onRetryScheduled(waitMs: number): void;
}

export interface Subscription {
  close(): void;
  /** Where the next (re)connect will resume from. */
  readonly resumeFrom: () => number;
}

const BACKOFF_MS = [1000, 2000, 4000, 8000, 15000];

/** Subscribe to /events, resuming after the last seen sequence number.
 *
 * On error the source is closed and reopened after a visible backoff;
 * `lastSeq` is re-read at each attempt so replayed records are skipped
 * server-side.
 */
export function subscribeEvents(
  baseUrl: string,
  lastSeq: () => number,
  hooks: SubscriptionHooks,
  makeSource: EventSourceFactory,
  schedule: (fn: () => void, ms: number) => unknown = (fn, ms) => setTimeout(fn, ms),
): Subscription {
  let source: EventSourceLike | null = null;
  let attempt = 0;
  let closed = false;

  const connect = () => {
    if (closed) {
      return;
    }
    const base = baseUrl.replace(/\/+$/, "");
    source = makeSource(`${base}/events?since=${lastSeq()}`);
    source.onopen = () => {
      attempt = 0;
      hooks.onOpen();
    };
    source.onmessage = (ev) => {
      const seq = Number(ev.lastEventId);
      if (Number.isFinite(seq) && seq > 0) {
        hooks.onRecord(seq, ev.data);
      }
    };
    source.onerror = () => {
      if (closed) {
        return;
      }
      source?.close();
      const wait = BACKOFF_MS[Math.min(attempt, BACKOFF_MS.length - 1)];
      attempt += 1;
      hooks.onRetryScheduled(wait);
      schedule(connect, wait);
    };
  };

  connect();
  return {
    close: () => {
      closed = true;
      source?.close();
    },
    resumeFrom: lastSeq,
  };
}
