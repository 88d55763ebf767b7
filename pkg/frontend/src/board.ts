// Live queue board: one color lane per level, entries in service order,
// per-entry wait timers, and status actions with optimistic updates.
import { setStatus } from "./api.js";
import { groupByLane } from "./ordering.js";
import { SCHEMA, type QueueStatus } from "./schema.js";
import type { QueueEntry } from "./types.js";

const NEXT_STATUS: Partial<Record<QueueStatus, QueueStatus>> = {
  waiting: "in-treatment",
  "in-treatment": "discharged",
};

export interface BoardCallbacks {
  onToast(message: string): void;
  onRefreshNeeded(): void;
  now(): number;
}

export class QueueBoard {
  private entries: QueueEntry[] = [];
  private lastRendered = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly callbacks: BoardCallbacks,
  ) {}

  snapshot(): readonly QueueEntry[] {
    return this.entries;
  }

  /** Replace board contents; skips DOM work when nothing changed. */
  setEntries(entries: QueueEntry[]): void {
    this.entries = entries;
    const fingerprint = JSON.stringify(entries);
    if (fingerprint === this.lastRendered) {
      this.updateTimers();
      return;
    }
    this.lastRendered = fingerprint;
    this.render();
  }

  /** Insert one fresh entry (from an intake response) without waiting for
   * the next poll. */
  addEntry(entry: QueueEntry): void {
    this.setEntries([...this.entries.filter((e) => e.entry_id !== entry.entry_id), entry]);
  }

  private render(): void {
    this.root.textContent = "";
    const lanes = groupByLane(this.entries);
    for (const level of SCHEMA.levels) {
      const lane = document.createElement("section");
      lane.className = `lane lane-${level.toLowerCase()}`;
      lane.dataset.level = level;

      const heading = document.createElement("h3");
      heading.textContent = `${level} (${lanes.get(level)!.length})`;
      lane.appendChild(heading);

      for (const entry of lanes.get(level)!) {
        lane.appendChild(this.renderEntry(entry));
      }
      this.root.appendChild(lane);
    }
    this.updateTimers();
  }

  private renderEntry(entry: QueueEntry): HTMLElement {
    const card = document.createElement("article");
    card.className = `entry status-${entry.status}`;
    card.dataset.entryId = String(entry.entry_id);
    card.dataset.level = entry.verdict.level;

    const title = document.createElement("strong");
    title.textContent = `#${entry.entry_id}`;
    card.appendChild(title);

    const status = document.createElement("span");
    status.className = "status";
    status.textContent = entry.status;
    card.appendChild(status);

    const wait = document.createElement("span");
    wait.className = "wait";
    wait.dataset.arrival = String(entry.arrival);
    card.appendChild(wait);

    const next = NEXT_STATUS[entry.status];
    if (next) {
      const button = document.createElement("button");
      button.textContent = next === "in-treatment" ? "Start treatment" : "Discharge";
      button.addEventListener("click", () => this.advance(entry, next));
      card.appendChild(button);
    }
    return card;
  }

  private advance(entry: QueueEntry, next: QueueStatus): void {
    const previous = entry.status;
    // optimistic: flip locally, roll back if the service refuses
    this.setEntries(this.entries.map((e) => (e.entry_id === entry.entry_id ? { ...e, status: next } : e)));
    setStatus(entry.entry_id, next).catch((err) => {
      this.setEntries(this.entries.map((e) => (e.entry_id === entry.entry_id ? { ...e, status: previous } : e)));
      this.callbacks.onToast(`status change rejected: ${err.message ?? err}`);
      this.callbacks.onRefreshNeeded();
    });
  }

  /** Refresh only the wait timers; called every second between polls. */
  updateTimers(): void {
    const now = this.callbacks.now();
    this.root.querySelectorAll<HTMLElement>(".wait").forEach((el) => {
      const arrival = Number(el.dataset.arrival ?? "0");
      const minutes = Math.max(0, Math.floor((now - arrival) / 60));
      el.textContent = `waiting ${minutes}m`;
    });
  }
}
