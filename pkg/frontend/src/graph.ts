import type { ModelPayload } from "./types.js";

export const GRAPH_STATE_LIMIT = 200;

export interface EdgeView {
  from: string;
  action: string;
  to: string;
  /** row weight normalized for display; rounding happens at render time */
  probability: number;
  weight: number;
}

/** Resolve the snapshot's count rows into named, normalized edges. This
 * is presentation of the snapshot, not inference: weights stay attached
 * so the raw payload numbers remain visible on hover. */
export function edgeViews(model: ModelPayload): EdgeView[] {
  const totals = new Map<string, number>();
  for (const [si, ai, , w] of model.counts) {
    const key = `${si}:${ai}`;
    totals.set(key, (totals.get(key) ?? 0) + w);
  }
  return model.counts.map(([si, ai, ti, w]) => ({
    from: model.states[si] ?? `s${si}`,
    action: model.actions[ai] ?? `a${ai}`,
    to: model.states[ti] ?? `s${ti}`,
    probability: w / (totals.get(`${si}:${ai}`) ?? w),
    weight: w,
  }));
}

/** States with no outgoing rows absorb; the graph highlights them. */
export function deadEndStates(model: ModelPayload): Set<string> {
  const outgoing = new Set(model.counts.map(([si]) => si));
  const dead = new Set<string>();
  model.states.forEach((name, i) => {
    if (!outgoing.has(i)) dead.add(name);
  });
  return dead;
}

export function labelsByState(model: ModelPayload): Map<string, string[]> {
  const byState = new Map<string, string[]>();
  for (const [label, members] of Object.entries(model.labels)) {
    for (const si of members) {
      const name = model.states[si];
      if (name === undefined) continue;
      const list = byState.get(name) ?? [];
      list.push(label);
      byState.set(name, list);
    }
  }
  for (const list of byState.values()) list.sort();
  return byState;
}
