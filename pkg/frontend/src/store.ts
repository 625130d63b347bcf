/** Dashboard state: the single mutable store the render pass reads.
 *
 * Everything flows in through three entry points: stream records
 * (applyStreamRecord), status polls (applyStatus), and command results
 * (noteCommandAccepted / noteCommandDenied). The store mirrors the
 * server-side guard for button enablement, but the gateway stays
 * authoritative: a denied POST renders its reason verbatim.
 */

import { EventFeed, parseStreamLine } from "./feed.js";
import type { ConnectionState, GatewayStatus, StreamPayload } from "./types.js";

export const SCHEDULE_SPAN_S = 75;

export interface DeviceCard {
  deviceId: string;
  connected: boolean;
  mode: string;
  phase: string;
  freqHz: number;
  remainingS: number;
  tensionN: number;
  activationAllowed: boolean;
  guardReason: string | null;
  activeStimulus: string | null;
  /** Denial text from the last refused command, shown until the next ok. */
  denial: string | null;
  /** Local countdown anchor: epoch ms when the 75 s schedule started. */
  countdownStartedMs: number | null;
}

export class DashboardStore {
  readonly feed = new EventFeed();
  connection: ConnectionState = { kind: "connecting" };
  devices = new Map<string, DeviceCard>();
  status: GatewayStatus | null = null;
  epoch: number | null = null;
  sweepError: string | null = null;

  private now: () => number;

  constructor(now: () => number = () => Date.now()) {
    this.now = now;
  }

  private card(deviceId: string): DeviceCard {
    let card = this.devices.get(deviceId);
    if (!card) {
      card = {
        deviceId,
        connected: false,
        mode: "idle",
        phase: "off",
        freqHz: 0,
        remainingS: 0,
        tensionN: 0,
        activationAllowed: true,
        guardReason: null,
        activeStimulus: null,
        denial: null,
        countdownStartedMs: null,
      };
      this.devices.set(deviceId, card);
    }
    return card;
  }

  /** Absorb one SSE record. Returns the parsed payload if it was new. */
  applyStreamRecord(seq: number, data: string): StreamPayload | null {
    const payload = parseStreamLine(data);
    if (!this.feed.push(seq, payload)) {
      return null;
    }
    this.connection = { kind: "live", lastEventAtMs: this.now() };
    if ("type" in payload && payload.type === "telemetry") {
      const card = this.card(payload.device);
      card.mode = payload.mode;
      card.phase = payload.phase;
      card.freqHz = payload.freq_hz;
      card.remainingS = payload.remaining_s;
      card.tensionN = payload.tension_n;
      if (payload.mode === "idle") {
        card.countdownStartedMs = null;
      }
    }
    return payload;
  }

  /** Absorb a /status poll; the server's guard verdicts win. */
  applyStatus(status: GatewayStatus): void {
    if (this.epoch !== null && status.epoch !== this.epoch) {
      this.feed.reset(); // gateway restarted: sequence numbers start over
    }
    this.epoch = status.epoch;
    this.status = status;
    for (const [deviceId, dev] of Object.entries(status.devices)) {
      const card = this.card(deviceId);
      card.connected = dev.connected;
      card.activationAllowed = dev.activation_allowed;
      card.guardReason = dev.guard_reason;
      card.activeStimulus = dev.active_stimulus;
      if (dev.telemetry) {
        card.mode = dev.telemetry.mode;
        card.phase = dev.telemetry.phase;
        card.freqHz = dev.telemetry.freq_hz;
        card.remainingS = dev.telemetry.remaining_s;
        card.tensionN = dev.telemetry.tension_n;
      }
    }
  }

  /** An activate command was acked ok: start the 75 s countdown. */
  noteCommandAccepted(deviceId: string, action: "activate" | "stop"): void {
    const card = this.card(deviceId);
    card.denial = null;
    if (action === "activate") {
      card.countdownStartedMs = this.now();
    } else {
      card.countdownStartedMs = null;
    }
  }

  /** A command was refused: keep the server's reason, verbatim. */
  noteCommandDenied(deviceId: string, reason: string): void {
    this.card(deviceId).denial = reason;
  }

  /** Seconds left on the local schedule countdown, null when idle. */
  countdownS(deviceId: string): number | null {
    const card = this.devices.get(deviceId);
    if (!card || card.countdownStartedMs === null) {
      return null;
    }
    const left = SCHEDULE_SPAN_S - (this.now() - card.countdownStartedMs) / 1000;
    if (left <= 0) {
      card.countdownStartedMs = null;
      return null;
    }
    return left;
  }

  markRetrying(retryInMs: number): void {
    this.connection = { kind: "retrying", retryInMs };
  }

  markConnecting(): void {
    this.connection = { kind: "connecting" };
  }

  markLive(): void {
    this.connection = { kind: "live", lastEventAtMs: this.now() };
  }
}
