import { displayValue, escapeHtml, fullValue } from "./format.js";
import { GRAPH_STATE_LIMIT, deadEndStates, edgeViews, labelsByState } from "./graph.js";
import type { PropertySeries } from "./series.js";
import type { DashboardStore } from "./store.js";
import type { AlertPayload, ModelPayload } from "./types.js";

/** Renderers are pure string builders over API payloads; the only
 * arithmetic is display normalization of the graph's edge weights. */

function valueSpan(value: Parameters<typeof displayValue>[0], cls: string): string {
  return (
    `<span class="${cls}" title="${escapeHtml(fullValue(value))}">` +
    `${escapeHtml(displayValue(value))}</span>`
  );
}

export function propertyPanel(series: PropertySeries): string {
  const latest = series.latest();
  const name = escapeHtml(series.property);
  const parts: string[] = [
    `<section class="panel" data-property="${name}">`,
    `<h3>${name}</h3>`,
  ];
  if (latest) {
    const state =
      latest.satisfied === undefined ? "" : latest.satisfied ? " ok" : " violated";
    parts.push(
      `<div class="latest${state}">${valueSpan(latest.value, "value")}` +
        `<span class="cycle">cycle ${latest.cycle}</span>` +
        (latest.converged ? "" : `<span class="warn">not converged</span>`) +
        `</div>`,
    );
  } else {
    parts.push(`<div class="latest empty">no results yet</div>`);
  }
  if (series.threshold) {
    parts.push(
      `<div class="threshold">threshold ${escapeHtml(series.threshold.op)} ` +
        `${valueSpan(series.threshold.value, "value")}</div>`,
    );
  }
  const items = series.points
    .map(
      (p) =>
        `<li class="point${p.flagged ? " flagged" : ""}" data-cycle="${p.cycle}" ` +
        `title="${escapeHtml(fullValue(p.value))}">` +
        `${escapeHtml(displayValue(p.value))}</li>`,
    )
    .join("");
  parts.push(`<ol class="series">${items}</ol>`, `</section>`);
  return parts.join("\n");
}

export function propertyPanels(store: DashboardStore): string {
  const names = [...store.series.keys()].sort();
  return names
    .map((name) => propertyPanel(store.series.get(name)!))
    .join("\n");
}

export function graphView(model: ModelPayload | null): string {
  if (!model) {
    return `<div class="graph empty">no model yet</div>`;
  }
  const edges = edgeViews(model);
  if (model.states.length > GRAPH_STATE_LIMIT) {
    const top = [...edges].sort((a, b) => b.weight - a.weight).slice(0, 100);
    const rows = top
      .map(
        (e) =>
          `<tr><td>${escapeHtml(e.from)}</td><td>${escapeHtml(e.action)}</td>` +
          `<td>${escapeHtml(e.to)}</td>` +
          `<td title="weight ${escapeHtml(String(e.weight))}">` +
          `${e.probability.toFixed(3)}</td></tr>`,
      )
      .join("");
    return (
      `<table class="transitions"><thead><tr>` +
      `<th>state</th><th>action</th><th>next</th><th>p</th>` +
      `</tr></thead><tbody>${rows}</tbody></table>`
    );
  }
  const dead = deadEndStates(model);
  const labels = labelsByState(model);
  const nodes = model.states
    .map((name, i) => {
      const classes = ["node"];
      if (i === model.initial) classes.push("initial");
      if (dead.has(name)) classes.push("terminal");
      const chips = (labels.get(name) ?? [])
        .map((l) => `<span class="label">${escapeHtml(l)}</span>`)
        .join("");
      return `<li class="${classes.join(" ")}">${escapeHtml(name)}${chips}</li>`;
    })
    .join("");
  const edgeItems = edges
    .map(
      (e) =>
        `<li class="edge">${escapeHtml(e.from)} ` +
        `<span class="action">${escapeHtml(e.action)}</span> ` +
        `<span class="prob" title="weight ${escapeHtml(String(e.weight))}">` +
        `${e.probability.toFixed(3)}</span> ${escapeHtml(e.to)}</li>`,
    )
    .join("");
  return (
    `<div class="graph"><ul class="nodes">${nodes}</ul>` +
    `<ul class="edges">${edgeItems}</ul></div>`
  );
}

export function alertList(alerts: AlertPayload[], connected: boolean): string {
  if (alerts.length === 0) return `<ul class="alerts empty"></ul>`;
  const rows = alerts
    .map((a) => {
      const classes = ["alert", `sev-${a.severity}`];
      if (a.acknowledged) classes.push("acked");
      const ackControl = a.acknowledged
        ? `<span class="ack-state">acknowledged</span>`
        : `<button class="ack" data-alert-id="${a.id}"` +
          `${connected ? "" : " disabled"}>acknowledge</button>`;
      const callback =
        a.callback_error === undefined
          ? ""
          : `<span class="callback-error">${escapeHtml(a.callback_error)}</span>`;
      return (
        `<li class="${classes.join(" ")}" data-alert-id="${a.id}">` +
        `<span class="property">${escapeHtml(a.property)}</span>` +
        `${valueSpan(a.value, "value")}` +
        `<span class="threshold">${escapeHtml(a.threshold.op)} ` +
        `${escapeHtml(displayValue(a.threshold.value))}</span>` +
        `<span class="cycle">cycle ${a.cycle}</span>` +
        `${callback}${ackControl}</li>`
      );
    })
    .join("");
  return `<ul class="alerts">${rows}</ul>`;
}

export function statusBar(store: DashboardStore): string {
  const classes = ["status"];
  if (!store.connected) classes.push("disconnected");
  if (store.stale) classes.push("stale");
  const bits: string[] = [store.connected ? "connected" : "disconnected"];
  if (store.stale) bits.push("stale: heartbeats missing");
  if (store.revision !== null) bits.push(`revision ${store.revision}`);
  if (store.lastDelta) {
    bits.push(
      `${store.lastDelta.states} states`,
      `${store.lastDelta.applied} events`,
    );
  }
  return `<div class="${classes.join(" ")}">${escapeHtml(bits.join(" | "))}</div>`;
}
