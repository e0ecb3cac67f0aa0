import type {
  AlertPayload,
  AuditPayload,
  ControlRequest,
  Envelope,
  FetchLike,
  MetricsPayload,
  ModelPayload,
  ResultPayload,
} from "./types.js";

/** Thin typed wrapper over the HTTP endpoints. Every method resolves to
 * the raw envelope; callers branch on `ok` and read `error` on failure. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async get<T>(path: string): Promise<Envelope<T>> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    return (await resp.json()) as Envelope<T>;
  }

  getModel(): Promise<Envelope<ModelPayload>> {
    return this.get("/api/v1/model");
  }

  getResults(): Promise<Envelope<Record<string, ResultPayload>>> {
    return this.get("/api/v1/results");
  }

  getAlerts(): Promise<Envelope<AlertPayload[]>> {
    return this.get("/api/v1/alerts");
  }

  getMetrics(): Promise<Envelope<MetricsPayload>> {
    return this.get("/api/v1/metrics");
  }

  async postControl(command: ControlRequest): Promise<Envelope<AuditPayload>> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/control`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(command),
    });
    return (await resp.json()) as Envelope<AuditPayload>;
  }
}
