import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function loadText(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf8");
}

export function loadFixture<T = unknown>(name: string): T {
  return JSON.parse(loadText(name)) as T;
}

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export interface SseResponseOptions {
  /** Byte lengths to slice the text into, cycled; default one big chunk. */
  chunks?: number[];
  /** Keep the stream open after the text so the connection never "ends". */
  stayOpen?: boolean;
}

export function sseResponse(text: string, opts: SseResponseOptions = {}): Response {
  const encoder = new TextEncoder();
  const bytes = encoder.encode(text);
  const sizes = opts.chunks ?? [bytes.length];
  let offset = 0;
  let i = 0;
  const body = new ReadableStream<Uint8Array>({
    pull(controller) {
      if (offset >= bytes.length) {
        if (!opts.stayOpen) controller.close();
        return;
      }
      const size = sizes[i % sizes.length] ?? bytes.length;
      i += 1;
      controller.enqueue(bytes.slice(offset, offset + size));
      offset += size;
    },
  });
  return new Response(body, {
    status: 200,
    headers: { "content-type": "text/event-stream" },
  });
}
