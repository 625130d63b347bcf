/** HTML renderers: pure state -> markup string functions.
 *
 * Kept free of document access so the layout logic is testable in node;
 * main.ts owns the actual DOM swaps and event wiring.
 */

import { describePayload } from "./feed.js";
import { chartGeometry, type SweepPoint } from "./sweep.js";
import type { DashboardStore } from "./store.js";
import type { DeviceCard } from "./store.js";
import type { TrialStatus } from "./types.js";

const esc = (s: string): string =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

export function renderConnectionBadge(store: DashboardStore): string {
  const c = store.connection;
  if (c.kind === "live") {
    return `<span class="badge live">live</span>`;
  }
  if (c.kind === "retrying") {
    return `<span class="badge retrying">reconnecting in ${(c.retryInMs / 1000).toFixed(0)} s</span>`;
  }
  return `<span class="badge connecting">connecting…</span>`;
}

export function renderDeviceCard(card: DeviceCard, countdownS: number | null): string {
  const disabled = card.activationAllowed ? "" : "disabled";
  const title = card.guardReason ? `title="${esc(card.guardReason)}"` : "";
  const countdown = countdownS !== null
    ? `<div class="countdown" data-device="${esc(card.deviceId)}">schedule: ${countdownS.toFixed(0)} s left</div>`
    : "";
  const denial = card.denial
    ? `<div class="denial">${esc(card.denial)}</div>`
    : "";
  return `
    <div class="device-card" data-device="${esc(card.deviceId)}">
      <h3>${esc(card.deviceId)} ${card.connected ? "●" : "○"}</h3>
      <div class="telemetry">
        mode <b>${esc(card.mode)}</b> · phase ${esc(card.phase)} ·
        ${card.freqHz.toFixed(0)} Hz · tension ${card.tensionN.toFixed(2)} N
      </div>
      <div class="stimulus">${card.activeStimulus ? `phase: ${esc(card.activeStimulus)}` : "no active trial phase"}</div>
      <div class="controls">
        <button data-action="swim" data-device="${esc(card.deviceId)}" ${disabled} ${title}>Swim (8 Hz)</button>
        <button data-action="beg" data-device="${esc(card.deviceId)}" ${disabled} ${title}>Beg (16 Hz)</button>
        <button data-action="stop" data-device="${esc(card.deviceId)}">Stop</button>
      </div>
      ${countdown}
      ${denial}
    </div>`;
}

export function renderDevices(store: DashboardStore): string {
  const cards = [...store.devices.values()]
    .sort((a, b) => a.deviceId.localeCompare(b.deviceId))
    .map((card) => renderDeviceCard(card, store.countdownS(card.deviceId)));
  return cards.length ? cards.join("\n") : `<p class="empty">no devices registered</p>`;
}

export function renderFeed(store: DashboardStore): string {
  const rows = store.feed.newestFirst.map((rec) =>
    `<tr><td class="seq">${rec.seq}</td><td>${esc(describePayload(rec.payload))}</td></tr>`);
  if (!rows.length) {
    return `<p class="empty">no events yet</p>`;
  }
  return `<table class="feed"><thead><tr><th>#</th><th>event</th></tr></thead>
    <tbody>${rows.join("")}</tbody></table>`;
}

export function renderTrialTimeline(trials: TrialStatus[]): string {
  if (!trials.length) {
    return `<p class="empty">no trials scheduled</p>`;
  }
  return trials.map((t) => {
    const phases = t.phases.map((p) => {
      const active = t.active_stimulus === p.stimulus ? "active" : "";
      return `<span class="phase ${p.stimulus} ${active}">
        ${esc(p.stimulus)}<br>${p.start_date} → ${p.end_date}</span>`;
    }).join("");
    return `<div class="trial"><h4>${esc(t.trial_id)} (pair ${esc(t.pair_id)})</h4>
      <div class="phases">${phases}</div></div>`;
  }).join("\n");
}

/** SVG line chart of the sweep with the 15-28 Hz plateau band shaded. */
export function renderSweepChart(points: SweepPoint[]): string {
  if (!points.length) {
    return `<p class="empty">no sweep data — run a characterization to see the curve</p>`;
  }
  const g = chartGeometry(points);
  const markers = g.markers.map((m) =>
    `<circle cx="${m.x.toFixed(1)}" cy="${m.y.toFixed(1)}" r="3">
       <title>${m.freqHz} Hz: ${m.amplitudeMm.toFixed(2)} mm</title></circle>`).join("");
  const xLabels = g.xTicks.map((t) =>
    `<text x="${t.x.toFixed(1)}" y="${g.height - 8}" class="tick">${t.label}</text>`).join("");
  const yLabels = g.yTicks.map((t) =>
    `<text x="6" y="${t.y.toFixed(1)}" class="tick">${t.label}</text>`).join("");
  return `
    <svg viewBox="0 0 ${g.width} ${g.height}" class="sweep-chart" role="img"
         aria-label="tail amplitude versus drive frequency">
      <rect class="plateau-band" x="${g.band.x.toFixed(1)}" y="10"
            width="${g.band.width.toFixed(1)}" height="${g.height - 38}"></rect>
      <polyline class="curve" fill="none" points="${g.path}"></polyline>
      ${markers}
      ${xLabels}
      ${yLabels}
      <text x="${g.width / 2}" y="${g.height - 0.5}" class="axis">drive frequency [Hz]</text>
    </svg>`;
}

export function renderSweepError(message: string): string {
  return `<div class="error-panel">sweep CSV rejected: ${esc(message)}</div>`;
}
