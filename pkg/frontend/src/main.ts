/** Dashboard entry point: wires the store, gateway client and DOM.
 *
 * The gateway URL comes from ?gateway=... (default: same host, port
 * 8080). Status polls run every 2 s; live records arrive over SSE with
 * resume on reconnect.
 */

import { GatewayClient, GuardDeniedError, subscribeEvents,
         type EventSourceLike } from "./client.js";
import { parseSweepCsv, SweepCsvError } from "./sweep.js";
import { DashboardStore } from "./store.js";
import {
  renderConnectionBadge,
  renderDevices,
  renderFeed,
  renderSweepChart,
  renderSweepError,
  renderTrialTimeline,
} from "./render.js";

const POLL_INTERVAL_MS = 2000;

function gatewayUrl(): string {
  const param = new URLSearchParams(window.location.search).get("gateway");
  return param ?? `http://${window.location.hostname}:8080`;
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id} in index.html`);
  }
  return node;
}

/** Adapt the browser EventSource to the injectable shape client.ts uses. */
function domEventSource(url: string): EventSourceLike {
  const es = new EventSource(url);
  const like: EventSourceLike = {
    onmessage: null,
    onopen: null,
    onerror: null,
    close: () => es.close(),
  };
  es.onmessage = (ev) => like.onmessage?.({ data: ev.data, lastEventId: ev.lastEventId });
  es.onopen = () => like.onopen?.();
  es.onerror = () => like.onerror?.();
  return like;
}

function main(): void {
  const store = new DashboardStore();
  const client = new GatewayClient(gatewayUrl());
  let sweepHtml = renderSweepChart([]);

  const redraw = () => {
    el("connection").innerHTML = renderConnectionBadge(store);
    el("devices").innerHTML = renderDevices(store);
    el("feed").innerHTML = renderFeed(store);
    el("trials").innerHTML = renderTrialTimeline(store.status?.trials ?? []);
    el("sweep").innerHTML = sweepHtml;
    el("gateway-url").textContent = client.baseUrl;
  };

  subscribeEvents(
    client.baseUrl,
    () => store.feed.lastSeq,
    {
      onRecord: (seq, data) => {
        try {
          store.applyStreamRecord(seq, data);
        } catch (err) {
          console.warn(String(err));
        }
        redraw();
      },
      onOpen: () => {
        store.markLive();
        redraw();
      },
      onRetryScheduled: (waitMs) => {
        store.markRetrying(waitMs);
        redraw();
      },
    },
    domEventSource,
  );

  const poll = async () => {
    try {
      store.applyStatus(await client.status());
    } catch (err) {
      console.warn(`status poll failed: ${String(err)}`);
    }
    redraw();
  };
  void poll();
  setInterval(poll, POLL_INTERVAL_MS);
  setInterval(redraw, 1000); // keep countdowns ticking between events

  el("devices").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const action = target.dataset.action;
    const deviceId = target.dataset.device;
    if (!action || !deviceId) {
      return;
    }
    const send = async () => {
      try {
        if (action === "stop") {
          await client.sendCommand(deviceId, "stop");
          store.noteCommandAccepted(deviceId, "stop");
        } else {
          const mode = action === "beg" ? "begging" : "swimming";
          const ack = await client.sendCommand(deviceId, "activate", mode);
          if (ack.ok) {
            store.noteCommandAccepted(deviceId, "activate");
          } else {
            store.noteCommandDenied(deviceId, ack.error ?? "device refused");
          }
        }
      } catch (err) {
        if (err instanceof GuardDeniedError) {
          store.noteCommandDenied(deviceId, err.denial.reason);
        } else {
          store.noteCommandDenied(deviceId, String(err));
        }
      }
      redraw();
    };
    void send();
  });

  el("run-sweep").addEventListener("click", () => {
    const run = async () => {
      try {
        const csv = await client.characterizationCsv();
        sweepHtml = renderSweepChart(parseSweepCsv(csv));
      } catch (err) {
        sweepHtml = err instanceof SweepCsvError
          ? renderSweepError(err.message)
          : renderSweepError(String(err));
      }
      redraw();
    };
    void run();
  });

  redraw();
}

main();
