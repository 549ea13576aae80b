/** One-second state poller with overlap protection and error callback. */

export const POLL_INTERVAL_MS = 1_000;
export const RENDER_TICK_MS = 250;

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;
  private inFlight = false;

  constructor(
    private readonly tick: () => Promise<void>,
    private readonly onError: (error: unknown) => void,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.run();
    this.timer = setInterval(() => void this.run(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  private async run(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.tick();
    } catch (error) {
      this.onError(error);
    } finally {
      this.inFlight = false;
    }
  }
}
