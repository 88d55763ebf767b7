// Polling loop: one in-flight request at a time, fixed 2 s cadence, and a
// stale-data marker with the last successful sync time on failure.
export interface PollCallbacks<T> {
  fetch(): Promise<T>;
  apply(payload: T): void;
  onStale(lastSync: Date | null): void;
  onFresh(): void;
}

export class Poller<T> {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;
  private lastSync: Date | null = null;

  constructor(
    private readonly callbacks: PollCallbacks<T>,
    private readonly intervalMs = 2000,
  ) {}

  start(): void {
    if (this.timer !== null) {
      return;
    }
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async tick(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    try {
      const payload = await this.callbacks.fetch();
      this.lastSync = new Date();
      this.callbacks.apply(payload);
      this.callbacks.onFresh();
    } catch {
      this.callbacks.onStale(this.lastSync);
    } finally {
      this.inFlight = false;
    }
  }
}
