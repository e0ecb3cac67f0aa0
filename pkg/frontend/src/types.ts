/** Wire types mirroring the engine's /api/v1 payloads. Values may arrive
 * as the strings "inf", "-inf", "NaN" or "undefined" because strict JSON
 * cannot carry non-finite numbers. */

export type WireValue = number | "inf" | "-inf" | "NaN" | "undefined" | null;

export interface ApiError {
  code: string;
  message: string;
}

export interface Envelope<T> {
  ok: boolean;
  data?: T;
  error?: ApiError;
  revision: number | null;
}

export interface ModelPayload {
  states: string[];
  actions: string[];
  /** rows of (state index, action index, successor index, weight) */
  counts: [number, number, number, number][];
  initial: number;
  labels: Record<string, number[]>;
  revision: number;
  reward_structures: Record<string, unknown>;
}

export interface ResultPayload {
  property: string;
  value: WireValue;
  satisfied?: boolean;
  converged: boolean;
  iterations: number;
  micros: number;
  revision: number;
  error?: string;
  cycle?: number;
}

export interface AlertPayload {
  id: number;
  property: string;
  severity: string;
  value: WireValue;
  threshold: { op: string; value: number };
  revision: number;
  cycle: number;
  timestamp: number;
  acknowledged: boolean;
  callback_error?: string;
}

export interface ModelDeltaPayload {
  revision: number;
  states: number;
  actions: number;
  total_weight: number;
  applied: number;
}

export interface HeartbeatPayload {
  ts: number;
}

export type Frame =
  | { kind: "model_delta"; cycle: number; payload: ModelDeltaPayload }
  | { kind: "result"; cycle: number; payload: ResultPayload }
  | { kind: "alert"; cycle: number; payload: AlertPayload }
  | { kind: "heartbeat"; cycle: number; payload: HeartbeatPayload };

export interface ControlRequest {
  command: string;
  alert_id?: number;
  name?: string;
}

export interface AuditPayload {
  id: number;
  command: string;
  name: string | null;
  source: string;
  alert_id: number | null;
  timestamp: number;
  ok: boolean;
  detail: string | null;
}

export type MetricsPayload = Record<string, number | boolean | string[]>;

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;
