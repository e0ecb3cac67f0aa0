export { ApiClient } from "./client.js";
export { displayValue, fullValue } from "./format.js";
export { GRAPH_STATE_LIMIT, deadEndStates, edgeViews, labelsByState } from "./graph.js";
export { alertList, graphView, propertyPanel, propertyPanels, statusBar } from "./render.js";
export { PropertySeries } from "./series.js";
export { SseParser, parseSseText } from "./sse.js";
export { DashboardStore, STALE_AFTER_MISSED_HEARTBEATS } from "./store.js";
export { StreamManager } from "./stream.js";
export { mount, performControl } from "./app.js";
export type * from "./types.js";
