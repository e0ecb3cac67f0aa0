import { describe, expect, it } from "vitest";

import { SseParser, parseSseText } from "../src/sse.js";
import { loadText } from "./helpers.js";

const STREAM = loadText("stream.sse");

describe("SseParser", () => {
  it("parses the recorded stream into typed frames", () => {
    const frames = parseSseText(STREAM);
    expect(frames).toHaveLength(9);
    expect(frames.map((f) => f.kind)).toEqual([
      "model_delta",
      "result",
      "result",
      "result",
      "alert",
      "model_delta",
      "result",
      "result",
      "result",
    ]);
  });

  it("is insensitive to chunk boundaries", () => {
    const whole = parseSseText(STREAM);
    for (const size of [1, 7, 64]) {
      const parser = new SseParser();
      const frames = [];
      for (let i = 0; i < STREAM.length; i += size) {
        frames.push(...parser.push(STREAM.slice(i, i + size)));
      }
      expect(frames).toEqual(whole);
    }
  });

  it("holds an incomplete block until its terminator arrives", () => {
    const parser = new SseParser();
    expect(parser.push('data: {"kind": "heartbeat", "cycle": 1, ')).toEqual([]);
    const frames = parser.push('"payload": {"ts": 1.0}}\n\n');
    expect(frames).toHaveLength(1);
    expect(frames[0]?.kind).toBe("heartbeat");
  });

  it("ignores comment keepalives and unknown frame kinds", () => {
    const parser = new SseParser();
    expect(parser.push(": ping\n\n")).toEqual([]);
    expect(parser.push('data: {"kind": "mystery", "cycle": 0, "payload": {}}\n\n')).toEqual([]);
  });
});
