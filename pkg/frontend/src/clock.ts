/** Server-clock alignment and countdown arithmetic.
 *
 * Every state response carries serverTimeMs; re-anchoring on each poll
 * bounds the countdown error by one poll interval plus local-clock drift
 * over a single second, which is negligible.
 */

export interface TimedTask {
  startedAtMs: number | null;
  durationMs: number;
  state: string;
}

export class ServerClock {
  private offsetMs = 0;
  private synced = false;

  sync(serverTimeMs: number, localNowMs: number): void {
    this.offsetMs = serverTimeMs - localNowMs;
    this.synced = true;
  }

  isSynced(): boolean {
    return this.synced;
  }

  serverNow(localNowMs: number): number {
    return localNowMs + this.offsetMs;
  }
}

export function elapsedMs(task: TimedTask, serverNowMs: number): number | null {
  if (task.startedAtMs === null) return null;
  return serverNowMs - task.startedAtMs;
}

export function countdownMs(task: TimedTask, serverNowMs: number): number | null {
  if (task.state !== "Active") return null;
  const elapsed = elapsedMs(task, serverNowMs);
  if (elapsed === null) return null;
  return Math.max(0, task.durationMs - elapsed);
}

export function formatCountdown(ms: number | null): string {
  if (ms === null) return "--:--";
  const totalSeconds = Math.ceil(ms / 1000);
  const minutes = Math.floor(totalSeconds / 60);
  const seconds = totalSeconds % 60;
  return `${String(minutes).padStart(2, "0")}:${String(seconds).padStart(2, "0")}`;
}
