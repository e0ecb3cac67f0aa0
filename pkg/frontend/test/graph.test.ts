import { describe, expect, it } from "vitest";

import { GRAPH_STATE_LIMIT, deadEndStates, edgeViews } from "../src/graph.js";
import { graphView } from "../src/render.js";
import type { Envelope, ModelPayload } from "../src/types.js";
import { loadFixture } from "./helpers.js";

const MODEL = loadFixture<Envelope<ModelPayload>>("model.json").data!;

/** Normalize the fixture's count rows independently of graph.ts. */
function expectedProbability(model: ModelPayload, row: number): number {
  const [si, ai, , w] = model.counts[row]!;
  let total = 0;
  for (const [s, a, , weight] of model.counts) {
    if (s === si && a === ai) total += weight;
  }
  return w / total;
}

describe("edgeViews", () => {
  it("matches the snapshot's counts to three displayed decimals", () => {
    const edges = edgeViews(MODEL);
    expect(edges).toHaveLength(MODEL.counts.length);
    edges.forEach((edge, row) => {
      const want = expectedProbability(MODEL, row);
      expect(edge.probability.toFixed(3)).toBe(want.toFixed(3));
    });
  });

  it("names edges from the snapshot's state and action tables", () => {
    const first = edgeViews(MODEL)[0]!;
    expect(first.from).toBe("understand_bug");
    expect(first.action).toBe("express_hypothesis");
    expect(first.to).toBe("collect_information");
  });

  it("splits weight across successors of one action", () => {
    const model: ModelPayload = {
      states: ["a", "b", "c"],
      actions: ["go"],
      counts: [
        [0, 0, 1, 3],
        [0, 0, 2, 1],
      ],
      initial: 0,
      labels: {},
      revision: 1,
      reward_structures: {},
    };
    const [toB, toC] = edgeViews(model);
    expect(toB?.probability).toBeCloseTo(0.75, 12);
    expect(toC?.probability).toBeCloseTo(0.25, 12);
    expect(toB?.weight).toBe(3);
  });
});

describe("graphView", () => {
  it("renders nodes with labels and highlights dead ends", () => {
    const html = graphView(MODEL);
    expect(html).toContain('class="node initial">understand_bug');
    expect(html).toContain('class="node terminal">fix_success');
    expect(html).toContain('<span class="label">done</span>');
    expect(deadEndStates(MODEL)).toEqual(new Set(["fix_success", "fix_failed"]));
  });

  it("shows each edge's display probability with the raw weight on hover", () => {
    const html = graphView(MODEL);
    expect(html).toContain('title="weight 7">1.000</span>');
  });

  it("falls back to a transition table past the state limit", () => {
    const states = Array.from({ length: GRAPH_STATE_LIMIT + 1 }, (_, i) => `s${i}`);
    const counts: [number, number, number, number][] = states.map((_, i) => [
      i,
      0,
      (i + 1) % states.length,
      i + 1,
    ]);
    const big: ModelPayload = {
      states,
      actions: ["tick"],
      counts,
      initial: 0,
      labels: {},
      revision: 9,
      reward_structures: {},
    };
    const html = graphView(big);
    expect(html).toContain('<table class="transitions">');
    expect(html).not.toContain('<ul class="nodes">');
    // heaviest transition first
    const heaviest = html.indexOf(`>s${GRAPH_STATE_LIMIT}<`);
    const lighter = html.indexOf(">s150<");
    expect(heaviest).toBeGreaterThanOrEqual(0);
    expect(lighter).toBeGreaterThan(heaviest);
  });

  it("renders a placeholder before the first snapshot", () => {
    expect(graphView(null)).toContain("no model yet");
  });
});
