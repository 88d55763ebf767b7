// Queue ordering is a pure function of the payload and mirrors the
// service's key: urgency rank (Red first), then arrival, then entry id.
// The board never computes a priority itself; it only sorts what the
// service already decided.
import { SCHEMA, type TriageLevel } from "./schema.js";
import type { QueueEntry } from "./types.js";

export function urgencyRank(level: TriageLevel): number {
  return SCHEMA.levels.indexOf(level);
}

export function orderingKey(entry: QueueEntry): [number, number, number] {
  return [urgencyRank(entry.verdict.level), entry.arrival, entry.entry_id];
}

export function compareEntries(a: QueueEntry, b: QueueEntry): number {
  const ka = orderingKey(a);
  const kb = orderingKey(b);
  for (let i = 0; i < ka.length; i++) {
    if (ka[i] !== kb[i]) {
      return ka[i] < kb[i] ? -1 : 1;
    }
  }
  return 0;
}

export function orderEntries(entries: readonly QueueEntry[]): QueueEntry[] {
  return [...entries].sort(compareEntries);
}

export function groupByLane(entries: readonly QueueEntry[]): Map<TriageLevel, QueueEntry[]> {
  const lanes = new Map<TriageLevel, QueueEntry[]>();
  for (const level of SCHEMA.levels) {
    lanes.set(level, []);
  }
  for (const entry of orderEntries(entries)) {
    lanes.get(entry.verdict.level)!.push(entry);
  }
  return lanes;
}
