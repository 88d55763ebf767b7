import { fetchModelCard, fetchQueue } from "./api.js";
import { QueueBoard } from "./board.js";
import { IntakeForm } from "./intake.js";
import { Poller } from "./poll.js";
import type { QueueEntry, TriageResponse } from "./types.js";
import { toRequestBody } from "./validation.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node;
}

function showToast(message: string): void {
  const toast = el("toast");
  toast.textContent = message;
  toast.classList.add("visible");
  setTimeout(() => toast.classList.remove("visible"), 4000);
}

function setBanner(visible: boolean): void {
  el("service-banner").classList.toggle("visible", visible);
}

function setStale(lastSync: Date | null): void {
  const stale = el("stale");
  stale.classList.add("visible");
  stale.textContent = lastSync
    ? `offline — showing data from ${lastSync.toLocaleTimeString()}`
    : "offline — no data yet";
}

function main(): void {
  const board = new QueueBoard(el("board"), {
    onToast: showToast,
    onRefreshNeeded: () => void poller.tick(),
    now: () => Date.now() / 1000,
  });

  const intake = new IntakeForm(el("intake"), el("verdict"), {
    onVerdict: (response: TriageResponse) => {
      // place the new entry on the board immediately; the next poll confirms
      const entry: QueueEntry = {
        entry_id: response.entry_id,
        patient: toRequestBody(intake.values()),
        verdict: response.verdict,
        arrival: Date.now() / 1000,
        status: "waiting",
      };
      board.addEntry(entry);
      setBanner(false);
    },
    onServiceDown: () => setBanner(true),
  });

  const poller = new Poller<QueueEntry[]>({
    fetch: fetchQueue,
    apply: (entries) => board.setEntries(entries),
    onStale: setStale,
    onFresh: () => {
      el("stale").classList.remove("visible");
      setBanner(false);
    },
  });
  poller.start();
  setInterval(() => board.updateTimers(), 1000);

  fetchModelCard()
    .then((card) => {
      el("model-card").textContent =
        `${card.preset} on the ${card.metric} graph · ${card.nodes} patients · config ${card.config_hash}`;
    })
    .catch(() => {
      el("model-card").textContent = "model card unavailable";
    });
}

main();
