import type { WireValue } from "./types.js";

/** Three-decimal display form with symbols for the non-finite cases.
 * The full-precision payload text belongs in the hover title, never here. */
export function displayValue(v: WireValue | undefined): string {
  if (v === null || v === undefined || v === "undefined") return "?";
  if (v === "inf") return "∞";
  if (v === "-inf") return "-∞";
  if (v === "NaN") return "NaN";
  if (typeof v === "number") {
    if (Number.isNaN(v)) return "NaN";
    if (!Number.isFinite(v)) return v > 0 ? "∞" : "-∞";
    return v.toFixed(3);
  }
  return String(v);
}

/** Full precision for hover titles: the payload value, verbatim. */
export function fullValue(v: WireValue | undefined): string {
  if (v === null || v === undefined) return "undefined";
  return String(v);
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}
