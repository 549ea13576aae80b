/** Judge workbench flow: fetch, render verdict, auto-advance, idle retry. */

import type { ApiClient, JudgeRequestDoc } from "./api.js";

export type JudgePhase = "idle" | "judging" | "submitting";

export interface JudgeState {
  phase: JudgePhase;
  request: JudgeRequestDoc | null;
}

export class JudgeFlow {
  state: JudgeState = { phase: "idle", request: null };

  constructor(
    private readonly api: Pick<ApiClient, "judgeNext" | "judgeVerdict">,
    private readonly evaluationId: string,
    private readonly onChange: (state: JudgeState) => void = () => {},
  ) {}

  private set(state: JudgeState): void {
    this.state = state;
    this.onChange(state);
  }

  /** Pull the next request; stays idle when the queue is empty. */
  async advance(): Promise<void> {
    if (this.state.phase === "submitting") return;
    const request = await this.api.judgeNext(this.evaluationId);
    if (request === null) {
      this.set({ phase: "idle", request: null });
    } else {
      this.set({ phase: "judging", request });
    }
  }

  /** Submit a verdict (null = undecidable) and fetch the next request. */
  async render(value: number | null): Promise<void> {
    const request = this.state.request;
    if (this.state.phase !== "judging" || request === null) return;
    this.set({ phase: "submitting", request });
    try {
      await this.api.judgeVerdict(this.evaluationId, request.requestId, value);
    } finally {
      this.set({ phase: "idle", request: null });
    }
    await this.advance();
  }
}
