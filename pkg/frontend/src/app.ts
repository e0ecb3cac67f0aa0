import { ApiClient } from "./client.js";
import { alertList, graphView, propertyPanels, statusBar } from "./render.js";
import { DashboardStore } from "./store.js";
import { StreamManager } from "./stream.js";
import type { ControlRequest, Envelope } from "./types.js";

export interface App {
  store: DashboardStore;
  stream: StreamManager;
  stop(): void;
}

export interface ControlOutcome {
  ok: boolean;
  message: string | null;
}

/** Send one control command and apply its confirmed effect.
 *
 * No optimistic updates: the store changes only after the server's ok
 * envelope, and the single local write is the acknowledged flag. Errors
 * come back as a message for the status area, leaving state untouched. */
export async function performControl(
  client: ApiClient,
  store: DashboardStore,
  command: ControlRequest,
): Promise<ControlOutcome> {
  let envelope: Envelope<unknown>;
  try {
    envelope = await client.postControl(command);
  } catch (err) {
    return { ok: false, message: `control failed: ${String(err)}` };
  }
  if (!envelope.ok) {
    return { ok: false, message: envelope.error?.message ?? "control rejected" };
  }
  if (command.command === "acknowledge" && command.alert_id !== undefined) {
    store.markAcknowledged(command.alert_id);
  }
  return { ok: true, message: null };
}

function layout(): string {
  return [
    `<div id="status-bar"></div>`,
    `<div id="control-error" class="control-error"></div>`,
    `<div class="controls">`,
    `<button id="ctl-pause">pause</button>`,
    `<button id="ctl-resume">resume</button>`,
    `<button id="ctl-terminate" class="danger">terminate</button>`,
    `</div>`,
    `<div id="panels"></div>`,
    `<div id="graph"></div>`,
    `<div id="alerts"></div>`,
  ].join("\n");
}

export function mount(root: HTMLElement, baseUrl: string): App {
  const client = new ApiClient(baseUrl);
  const store = new DashboardStore();
  root.innerHTML = layout();

  const region = (id: string) => root.querySelector<HTMLElement>(`#${id}`)!;
  const render = () => {
    region("status-bar").innerHTML = statusBar(store);
    region("panels").innerHTML = propertyPanels(store);
    region("graph").innerHTML = graphView(store.model);
    region("alerts").innerHTML = alertList(store.alerts, store.connected);
    for (const id of ["ctl-pause", "ctl-resume", "ctl-terminate"]) {
      (region(id) as HTMLButtonElement).disabled = !store.connected;
    }
  };
  store.onChange(render);

  const showControlError = (message: string) => {
    region("control-error").textContent = message;
  };

  const sendControl = async (command: ControlRequest) => {
    showControlError("");
    const outcome = await performControl(client, store, command);
    if (outcome.message) showControlError(outcome.message);
  };

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (!store.connected) return;
    if (target.id === "ctl-pause") void sendControl({ command: "pause" });
    if (target.id === "ctl-resume") void sendControl({ command: "resume" });
    if (target.id === "ctl-terminate") {
      if (window.confirm("Terminate the observed agent?")) {
        void sendControl({ command: "terminate" });
      }
    }
    if (target.classList.contains("ack")) {
      const id = Number(target.getAttribute("data-alert-id"));
      if (Number.isFinite(id)) {
        void sendControl({ command: "acknowledge", alert_id: id });
      }
    }
  });

  const stream = new StreamManager(baseUrl, {
    onFrame: (frame) => store.enqueue(frame),
    onConnect: () => {
      store.setConnected(true);
      // The stream prelude replays the current snapshot, so the series
      // and alert maps resync in place without duplicate points.
    },
    onDrop: () => store.setConnected(false),
    onHeartbeatMissed: () => store.heartbeatMissed(),
  });

  void (async () => {
    const [model, results, alerts] = await Promise.all([
      client.getModel(),
      client.getResults(),
      client.getAlerts(),
    ]);
    store.seed(
      model.ok ? (model.data ?? null) : null,
      results.ok ? (results.data ?? {}) : {},
      alerts.ok ? (alerts.data ?? []) : [],
    );
    stream.start();
  })();

  render();
  return { store, stream, stop: () => stream.stop() };
}
