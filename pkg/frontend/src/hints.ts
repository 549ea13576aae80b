/** Hint reveal scheduling.
 *
 * The server includes hints that are active now or start within its
 * lookahead window; entries accumulate here across polls and become
 * visible exactly when their activeFromMs passes on the aligned clock,
 * so reveals do not wait for the next poll.
 */

import type { HintDoc } from "./api.js";

function entryKey(hint: HintDoc): string {
  return `${hint.channel}@${hint.activeFromMs}`;
}

export class HintSchedule {
  private entries = new Map<string, HintDoc>();

  /** Merge one poll's hint list; earlier entries are retained. */
  absorb(hints: HintDoc[] | undefined): void {
    for (const hint of hints ?? []) {
      this.entries.set(entryKey(hint), hint);
    }
  }

  reset(): void {
    this.entries.clear();
  }

  /** Hints to display at the given task-relative time. */
  visibleAt(elapsedMs: number): HintDoc[] {
    const visible: HintDoc[] = [];
    for (const hint of this.entries.values()) {
      if (hint.activeFromMs > elapsedMs) continue;
      if (hint.activeUntilMs !== null && elapsedMs >= hint.activeUntilMs) continue;
      visible.push(hint);
    }
    visible.sort((a, b) => a.channel.localeCompare(b.channel) || a.activeFromMs - b.activeFromMs);
    return visible;
  }

  known(): HintDoc[] {
    return [...this.entries.values()];
  }
}
