import type { WireValue } from "./types.js";

export interface SeriesPoint {
  cycle: number;
  value: WireValue;
  converged: boolean;
  satisfied?: boolean;
  /** an alert fired at this cycle */
  flagged?: boolean;
}

export const DEFAULT_CAPACITY = 500;

/** Bounded history of one property's verification results, ordered by
 * cycle. Re-delivery of a cycle (stream resync) replaces the point in
 * place, so a reconnect never duplicates history. */
export class PropertySeries {
  readonly points: SeriesPoint[] = [];
  threshold?: { op: string; value: number };

  constructor(
    readonly property: string,
    readonly capacity: number = DEFAULT_CAPACITY,
  ) {}

  push(point: SeriesPoint): void {
    const pts = this.points;
    let i = pts.length;
    while (i > 0 && pts[i - 1]!.cycle > point.cycle) i--;
    if (i > 0 && pts[i - 1]!.cycle === point.cycle) {
      pts[i - 1] = { ...pts[i - 1], ...point };
    } else {
      pts.splice(i, 0, point);
    }
    while (pts.length > this.capacity) pts.shift();
  }

  flag(cycle: number): void {
    const p = this.points.find((q) => q.cycle === cycle);
    if (p) p.flagged = true;
  }

  latest(): SeriesPoint | undefined {
    return this.points[this.points.length - 1];
  }
}
