/** Typed client for the public evaluation-server API (v1). */

export interface PayloadDoc {
  kind: string;
  itemId?: string;
  range?: { startMs: number; endMs: number };
  text?: string;
}

export interface HintDoc {
  channel: string;
  activeFromMs: number;
  activeUntilMs: number | null;
  payload: PayloadDoc | null;
  resource: string | null;
}

export interface ScoreboardRow {
  teamId: string;
  teamName: string;
  perGroupScores: Record<string, number>;
  total: number;
  rank: number;
}

export interface OwnSubmissionDoc {
  id: string;
  receivedAtMs: number;
  status: string;
  answers: { payload: PayloadDoc; verdict: { value: number | null } | null }[];
}

export interface TaskViewDoc {
  taskRunId: string;
  templateId: string;
  name: string;
  group: string;
  collectionId: string;
  state: string;
  startedAtMs: number | null;
  endedAtMs: number | null;
  durationMs: number;
  remainingMs: number | null;
  endReason: string | null;
  hints?: HintDoc[];
  ownSubmissions?: OwnSubmissionDoc[];
  ownReady?: boolean;
}

export interface ParticipantStateDoc {
  serverTimeMs: number;
  evaluationId: string;
  name: string;
  mode: string;
  state: string;
  teamId: string;
  teamName: string;
  task: TaskViewDoc | null;
  scoreboard: ScoreboardRow[];
  tasks?: TaskViewDoc[];
  remainingTemplates?: string[];
}

export interface ViewerStateDoc {
  serverTimeMs: number;
  evaluationId: string;
  name: string;
  mode: string;
  state: string;
  activeTask: TaskViewDoc | null;
  readiness: string[];
  scoreboard: ScoreboardRow[];
}

export interface AdminTaskDoc {
  id: string;
  templateId: string;
  state: string;
  startedAtMs: number | null;
  endedAtMs: number | null;
  durationMs: number;
  scope: string | null;
  endReason: string | null;
  readiness: string[];
  submissions: unknown[];
}

export interface AdminStateDoc {
  serverTimeMs: number;
  evaluation: {
    id: string;
    state: string;
    mode: string;
    template: { name: string; teams: { id: string; name: string }[]; taskTemplates: { id: string; name: string }[] };
    tasks: AdminTaskDoc[];
  };
  openJudgements: number;
  scoreboard: ScoreboardRow[];
}

export interface JudgeRequestDoc {
  requestId: string;
  payload: PayloadDoc;
  taskName: string;
  taskDescription: string[];
  mediaRef: { collectionId: string; itemId: string; itemName: string } | null;
}

export interface EvaluationSummary {
  id: string;
  name: string;
  mode: string;
  state: string;
}

export class ApiError extends Error {
  constructor(
    public readonly kind: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  private token: string | null = null;

  constructor(private readonly base: string = "") {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const response = await fetch(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
      credentials: "same-origin",
    });
    if (response.status === 204) return null as T;
    const text = await response.text();
    let doc: unknown = null;
    try {
      doc = text ? JSON.parse(text) : null;
    } catch {
      doc = null;
    }
    if (!response.ok) {
      const err = (doc ?? {}) as { error?: string; message?: string };
      throw new ApiError(err.error ?? "http", err.message ?? text, response.status);
    }
    return doc as T;
  }

  async login(username: string, password: string): Promise<{ token: string; role: string; userId: string }> {
    const doc = await this.call<{ token: string; role: string; userId: string }>("POST", "/api/v1/login", {
      username,
      password,
    });
    this.token = doc.token;
    return doc;
  }

  logout(): Promise<unknown> {
    return this.call("POST", "/api/v1/logout", {});
  }

  listEvaluations(): Promise<{ serverTimeMs: number; evaluations: EvaluationSummary[] }> {
    return this.call("GET", "/api/v1/evaluations");
  }

  state<T>(evaluationId: string): Promise<T> {
    return this.call("GET", `/api/v1/evaluations/${evaluationId}/state`);
  }

  ready(evaluationId: string): Promise<unknown> {
    return this.call("POST", `/api/v1/evaluations/${evaluationId}/ready`, {});
  }

  nextTask(evaluationId: string, templateId: string): Promise<unknown> {
    return this.call("POST", `/api/v1/evaluations/${evaluationId}/next-task`, { templateId });
  }

  adminCommand(evaluationId: string, command: Record<string, unknown>): Promise<unknown> {
    return this.call("POST", `/api/v1/evaluations/${evaluationId}/admin`, command);
  }

  judgeNext(evaluationId: string): Promise<JudgeRequestDoc | null> {
    return this.call("GET", `/api/v1/evaluations/${evaluationId}/judge/next`);
  }

  judgeVerdict(
    evaluationId: string,
    requestId: string,
    value: number | null,
  ): Promise<unknown> {
    const body =
      value === null ? { requestId, undecidable: true } : { requestId, value };
    return this.call("POST", `/api/v1/evaluations/${evaluationId}/judge/verdict`, body);
  }

  mediaUrl(collectionId: string, itemRef: string): string {
    return `${this.base}/api/v1/media/${collectionId}/${encodeURIComponent(itemRef)}`;
  }
}
