import type { Frame } from "./types.js";

/** Incremental server-sent-events parser. Frames carry their kind inside
 * the JSON body, so the `event:` header line is not needed to dispatch. */
export class SseParser {
  private buffer = "";

  push(chunk: string): Frame[] {
    this.buffer += chunk;
    const frames: Frame[] = [];
    let split: number;
    while ((split = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const frame = parseBlock(block);
      if (frame !== null) frames.push(frame);
    }
    return frames;
  }
}

const FRAME_KINDS = new Set(["model_delta", "result", "alert", "heartbeat"]);

function parseBlock(block: string): Frame | null {
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("data:")) {
      dataLines.push(line.slice(5).replace(/^ /, ""));
    }
  }
  if (dataLines.length === 0) return null;
  try {
    const doc = JSON.parse(dataLines.join("\n")) as Frame;
    if (typeof doc !== "object" || doc === null) return null;
    return FRAME_KINDS.has(doc.kind) ? doc : null;
  } catch {
    return null;
  }
}

export function parseSseText(text: string): Frame[] {
  return new SseParser().push(text);
}
