import { PropertySeries } from "./series.js";
import type {
  AlertPayload,
  Frame,
  ModelDeltaPayload,
  ModelPayload,
  ResultPayload,
} from "./types.js";

export const STALE_AFTER_MISSED_HEARTBEATS = 2;

/** UI state, fed once from the REST snapshot and then exclusively from
 * stream frames. Frames pass through one serialized application queue;
 * listeners observe only settled state. The store renders what the API
 * said and computes nothing about the model itself. */
export class DashboardStore {
  readonly series = new Map<string, PropertySeries>();
  alerts: AlertPayload[] = [];
  model: ModelPayload | null = null;
  lastDelta: ModelDeltaPayload | null = null;
  revision: number | null = null;
  connected = false;
  missedHeartbeats = 0;

  private queue: Frame[] = [];
  private draining = false;
  private listeners: (() => void)[] = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  /** Initial state from GET /model, /results and /alerts. */
  seed(
    model: ModelPayload | null,
    results: Record<string, ResultPayload>,
    alerts: AlertPayload[],
  ): void {
    this.model = model;
    if (model) this.revision = model.revision;
    for (const result of Object.values(results)) {
      this.applyResult(result, result.cycle ?? 0);
    }
    this.alerts = alerts.slice().sort((a, b) => b.id - a.id);
    for (const alert of this.alerts) this.noteAlert(alert);
    this.emit();
  }

  enqueue(frame: Frame): void {
    this.queue.push(frame);
    if (this.draining) return;
    this.draining = true;
    try {
      let next: Frame | undefined;
      while ((next = this.queue.shift()) !== undefined) this.apply(next);
    } finally {
      this.draining = false;
    }
    this.emit();
  }

  private apply(frame: Frame): void {
    this.missedHeartbeats = 0;
    if (frame.kind === "model_delta") {
      this.lastDelta = frame.payload;
      this.revision = frame.payload.revision;
    } else if (frame.kind === "result") {
      this.applyResult(frame.payload, frame.cycle);
    } else if (frame.kind === "alert") {
      this.upsertAlert(frame.payload);
    }
    // heartbeats only prove liveness
  }

  seriesFor(property: string): PropertySeries {
    let s = this.series.get(property);
    if (!s) {
      s = new PropertySeries(property);
      this.series.set(property, s);
    }
    return s;
  }

  private applyResult(result: ResultPayload, cycle: number): void {
    this.seriesFor(result.property).push({
      cycle,
      value: result.value,
      converged: result.converged,
      satisfied: result.satisfied,
    });
  }

  private upsertAlert(alert: AlertPayload): void {
    const i = this.alerts.findIndex((a) => a.id === alert.id);
    if (i >= 0) {
      this.alerts[i] = alert;
    } else {
      this.alerts.unshift(alert);
      this.alerts.sort((a, b) => b.id - a.id);
    }
    this.noteAlert(alert);
  }

  private noteAlert(alert: AlertPayload): void {
    const s = this.seriesFor(alert.property);
    s.threshold = alert.threshold;
    s.flag(alert.cycle);
  }

  /** Called only after POST /control confirmed the acknowledgment;
   * optimistic updates are deliberately not supported. */
  markAcknowledged(alertId: number): void {
    const alert = this.alerts.find((a) => a.id === alertId);
    if (alert) alert.acknowledged = true;
    this.emit();
  }

  setConnected(connected: boolean): void {
    this.connected = connected;
    if (connected) this.missedHeartbeats = 0;
    this.emit();
  }

  heartbeatMissed(): void {
    this.missedHeartbeats += 1;
    this.emit();
  }

  get stale(): boolean {
    return this.missedHeartbeats >= STALE_AFTER_MISSED_HEARTBEATS;
  }
}
