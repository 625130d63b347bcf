/** Scripted-scenario acceptance: the dashboard behaviors the experimenter
 * relies on, driven against a faked gateway (see live.integration.test.ts
 * for the same flows against the real service).
 */

import { describe, expect, it } from "vitest";

import { GatewayClient, GuardDeniedError, subscribeEvents } from "../src/client.js";
import { parseSweepCsv } from "../src/sweep.js";
import { DashboardStore, SCHEDULE_SPAN_S } from "../src/store.js";
import { renderDeviceCard, renderSweepChart } from "../src/render.js";
import type { EventSourceLike, FetchLike } from "../src/client.js";
import type { GatewayStatus } from "../src/types.js";

class FakeSource implements EventSourceLike {
  onmessage: ((ev: { data: string; lastEventId: string }) => void) | null = null;
  onopen: (() => void) | null = null;
  onerror: (() => void) | null = null;

  constructor(readonly url: string) {}

  close(): void {}

  emit(seq: number, payload: unknown): void {
    this.onmessage?.({ data: JSON.stringify(payload), lastEventId: String(seq) });
  }
}

function sweepCsv24(): string {
  const lines = ["freq_hz,amplitude_mm,estimated_freq_hz"];
  for (let f = 5; f <= 28; f++) {
    const amp = f < 12 ? 2.8 + 0.1 * (f - 5) : 5.0;
    lines.push(`${f}.0,${amp.toFixed(3)},${f}.0`);
  }
  return lines.join("\n") + "\n";
}

function scriptedGateway(phase: "actuated_tadbot" | "inert_tadbot") {
  const allowed = phase === "actuated_tadbot";
  const status: GatewayStatus = {
    epoch: 1,
    devices: {
      "tb-01": {
        pair_id: "pair-a",
        connected: true,
        telemetry: { device: "tb-01", t_s: 0, mode: "idle", phase: "off",
                     freq_hz: 0, remaining_s: 0, tension_n: 1.0 },
        active_stimulus: phase,
        activation_allowed: allowed,
        guard_reason: allowed ? null
          : `activation denied during ${phase} phase of trial pair-a-2024-01-01`,
      },
    },
    trials: [],
    events: { total: 0 },
  };
  const fetchImpl: FetchLike = async (url, init) => {
    if (url.endsWith("/status")) {
      return { status: 200, text: async () => JSON.stringify(status) };
    }
    if (url.includes("/command")) {
      if (!allowed && JSON.parse(init!.body!).action === "activate") {
        return {
          status: 403,
          text: async () => JSON.stringify({
            detail: { reason: status.devices["tb-01"].guard_reason, phase },
          }),
        };
      }
      return { status: 200, text: async () => '{"id":"c1","ok":true,"error":null}' };
    }
    if (url.includes("/characterization")) {
      return { status: 200, text: async () => sweepCsv24() };
    }
    throw new Error(`unexpected ${url}`);
  };
  return { status, fetchImpl };
}

describe("dashboard acceptance (scripted gateway)", () => {
  it("shows a motion event as soon as the stream delivers it", () => {
    const store = new DashboardStore();
    const sources: FakeSource[] = [];
    subscribeEvents(
      "http://gw:8080",
      () => store.feed.lastSeq,
      {
        onRecord: (seq, data) => store.applyStreamRecord(seq, data),
        onOpen: () => store.markLive(),
        onRetryScheduled: (ms) => store.markRetrying(ms),
      },
      (url) => { const s = new FakeSource(url); sources.push(s); return s; },
      () => 0,
    );
    sources[0].onopen?.();
    sources[0].emit(1, { v: 1, type: "motion", camera: "cam-1", score: 0.0441,
                         ts: "2024-01-16T09:00:00Z" });
    expect(store.feed.size).toBe(1);
    const payload = store.feed.inOrder[0].payload;
    expect("type" in payload && payload.type).toBe("motion");
    expect(store.connection.kind).toBe("live");
  });

  it("Beg in an actuated phase starts a 75 s countdown", async () => {
    const { fetchImpl } = scriptedGateway("actuated_tadbot");
    let nowMs = 1_000_000;
    const store = new DashboardStore(() => nowMs);
    const client = new GatewayClient("http://gw:8080", fetchImpl);
    store.applyStatus(await client.status());
    expect(store.devices.get("tb-01")!.activationAllowed).toBe(true);

    const ack = await client.sendCommand("tb-01", "activate", "begging");
    expect(ack.ok).toBe(true);
    store.noteCommandAccepted("tb-01", "activate");
    expect(store.countdownS("tb-01")).toBeCloseTo(SCHEDULE_SPAN_S, 5);

    const html = renderDeviceCard(store.devices.get("tb-01")!,
                                  store.countdownS("tb-01"));
    expect(html).toContain("schedule: 75 s left");

    nowMs += 30_000;
    expect(store.countdownS("tb-01")).toBeCloseTo(45, 5);
  });

  it("Beg in an inert phase renders the guard denial verbatim", async () => {
    const { status, fetchImpl } = scriptedGateway("inert_tadbot");
    const store = new DashboardStore();
    const client = new GatewayClient("http://gw:8080", fetchImpl);
    store.applyStatus(await client.status());
    const card = store.devices.get("tb-01")!;
    expect(card.activationAllowed).toBe(false);
    expect(renderDeviceCard(card, null)).toContain("disabled");

    try {
      await client.sendCommand("tb-01", "activate", "begging");
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(GuardDeniedError);
      store.noteCommandDenied("tb-01", (err as GuardDeniedError).denial.reason);
    }
    const reason = status.devices["tb-01"].guard_reason!;
    expect(store.devices.get("tb-01")!.denial).toBe(reason);
    expect(renderDeviceCard(store.devices.get("tb-01")!, null)).toContain(reason);
  });

  it("sweep CSV renders 24 points with the plateau band", async () => {
    const { fetchImpl } = scriptedGateway("actuated_tadbot");
    const client = new GatewayClient("http://gw:8080", fetchImpl);
    const points = parseSweepCsv(await client.characterizationCsv());
    expect(points).toHaveLength(24);
    const svg = renderSweepChart(points);
    expect(svg.match(/<circle /g)).toHaveLength(24);
    expect(svg).toContain("plateau-band");
  });

  it("empty sweep CSV shows the empty state, not a chart", () => {
    expect(renderSweepChart(parseSweepCsv(""))).toContain("no sweep data");
  });
});
