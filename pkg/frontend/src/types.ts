/** Shapes of what the gateway sends: wire-protocol lines, status, trials. */

export interface TelemetryMsg {
  v: 1;
  type: "telemetry";
  device: string;
  t_s: number;
  mode: "idle" | "swimming" | "begging";
  phase: "on" | "off";
  freq_hz: number;
  remaining_s: number;
  tension_n: number;
}

export interface MotionMsg {
  v: 1;
  type: "motion";
  camera: string;
  score: number;
  ts: string;
}

/** Care-event log lines also travel on the event stream. */
export interface CareEventLine {
  ts: string;
  trial_id: string;
  kind: string;
  payload: string;
}

export type StreamPayload = TelemetryMsg | MotionMsg | CareEventLine;

/** One entry of the dashboard's event feed, keyed by stream sequence. */
export interface FeedRecord {
  seq: number;
  payload: StreamPayload;
}

export interface DeviceStatus {
  pair_id: string | null;
  connected: boolean;
  telemetry: {
    device: string;
    t_s: number;
    mode: string;
    phase: string;
    freq_hz: number;
    remaining_s: number;
    tension_n: number;
  } | null;
  active_stimulus: string | null;
  activation_allowed: boolean;
  guard_reason: string | null;
}

export interface TrialPhaseInfo {
  stimulus: string;
  start_date: string;
  end_date: string;
}

export interface TrialStatus {
  trial_id: string;
  pair_id: string;
  canister_id: string;
  start_date: string;
  end_date: string;
  active_stimulus: string | null;
  phases: TrialPhaseInfo[];
}

export interface GatewayStatus {
  epoch: number;
  devices: Record<string, DeviceStatus>;
  trials: TrialStatus[];
  events: Record<string, number>;
}

export interface CommandAck {
  id: string;
  ok: boolean;
  error: string | null;
}

/** 403 body the gateway returns when the trial-phase guard refuses. */
export interface GuardDenial {
  reason: string;
  phase: string | null;
}

export type ConnectionState =
  | { kind: "connecting" }
  | { kind: "live"; lastEventAtMs: number }
  | { kind: "retrying"; retryInMs: number };
