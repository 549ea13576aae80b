/** Role-scoped view models: pure projections of state responses.
 *
 * These never invent data the API withheld for the role; the participant
 * model additionally drops anything that does not belong to the viewer's
 * own team even if a malformed response were to smuggle it in.
 */

import type {
  AdminStateDoc,
  HintDoc,
  OwnSubmissionDoc,
  ParticipantStateDoc,
  ScoreboardRow,
  TaskViewDoc,
  ViewerStateDoc,
} from "./api.js";
import { countdownMs, elapsedMs } from "./clock.js";
import { HintSchedule } from "./hints.js";

export interface TaskPanel {
  name: string;
  group: string;
  state: string;
  collectionId: string;
  countdownMs: number | null;
  visibleHints: HintDoc[];
}

export interface ParticipantVM {
  evaluationName: string;
  evaluationState: string;
  mode: string;
  teamId: string;
  teamName: string;
  task: TaskPanel | null;
  ownReady: boolean;
  ownSubmissions: OwnSubmissionDoc[];
  readyEnabled: boolean;
  nextTaskChoices: string[];
  scoreboard: ScoreboardRow[];
}

function taskPanel(task: TaskViewDoc, schedule: HintSchedule, serverNowMs: number): TaskPanel {
  schedule.absorb(task.hints);
  const elapsed = elapsedMs(task, serverNowMs);
  return {
    name: task.name,
    group: task.group,
    state: task.state,
    collectionId: task.collectionId,
    countdownMs: countdownMs(task, serverNowMs),
    visibleHints: task.state === "Active" && elapsed !== null ? schedule.visibleAt(elapsed) : [],
  };
}

export function participantViewModel(
  doc: ParticipantStateDoc,
  schedule: HintSchedule,
  serverNowMs: number,
): ParticipantVM {
  const task = doc.task;
  // Defensive ownership filter: the API already scopes submissions to the
  // requesting team; anything else is discarded rather than rendered.
  const own = (task?.ownSubmissions ?? []).filter(
    (submission) => !("teamId" in submission) || (submission as { teamId?: string }).teamId === doc.teamId,
  );
  return {
    evaluationName: doc.name,
    evaluationState: doc.state,
    mode: doc.mode,
    teamId: doc.teamId,
    teamName: doc.teamName,
    task: task ? taskPanel(task, schedule, serverNowMs) : null,
    ownReady: task?.ownReady ?? false,
    ownSubmissions: own,
    readyEnabled: task?.state === "Preparing" && !(task?.ownReady ?? false),
    nextTaskChoices:
      doc.mode === "interactiveAsync" && (task === null || task.state === "Ended")
        ? doc.remainingTemplates ?? []
        : [],
    scoreboard: doc.scoreboard,
  };
}

export interface ViewerVM {
  evaluationName: string;
  evaluationState: string;
  task: TaskPanel | null;
  readyTeams: string[];
  scoreboard: ScoreboardRow[];
}

export function viewerViewModel(
  doc: ViewerStateDoc,
  schedule: HintSchedule,
  serverNowMs: number,
): ViewerVM {
  return {
    evaluationName: doc.name,
    evaluationState: doc.state,
    task: doc.activeTask ? taskPanel(doc.activeTask, schedule, serverNowMs) : null,
    readyTeams: doc.readiness,
    scoreboard: doc.scoreboard,
  };
}

export interface AdminTaskRow {
  id: string;
  templateId: string;
  scope: string | null;
  state: string;
  countdownMs: number | null;
  durationMs: number;
  endReason: string | null;
  readyCount: number;
  submissionCount: number;
}

export interface AdminVM {
  evaluationId: string;
  evaluationName: string;
  evaluationState: string;
  mode: string;
  openJudgements: number;
  tasks: AdminTaskRow[];
  taskTemplates: { id: string; name: string }[];
  canStartEvaluation: boolean;
  canStageNextTask: boolean;
  canForceStartTask: boolean;
  canAbortTask: boolean;
  canAdjustDuration: boolean;
  canEndEvaluation: boolean;
  scoreboard: ScoreboardRow[];
}

export function adminViewModel(doc: AdminStateDoc, serverNowMs: number): AdminVM {
  const evaluation = doc.evaluation;
  const tasks = evaluation.tasks.map((task) => ({
    id: task.id,
    templateId: task.templateId,
    scope: task.scope,
    state: task.state,
    countdownMs: countdownMs(task, serverNowMs),
    durationMs: task.durationMs,
    endReason: task.endReason,
    readyCount: task.readiness.length,
    submissionCount: task.submissions.length,
  }));
  const shared = tasks.filter((task) => task.scope === null);
  const openShared = shared.filter((task) => task.state !== "Ended");
  const active = evaluation.state === "Active";
  const sync = evaluation.mode === "interactiveSync";
  return {
    evaluationId: evaluation.id,
    evaluationName: evaluation.template.name,
    evaluationState: evaluation.state,
    mode: evaluation.mode,
    openJudgements: doc.openJudgements,
    tasks,
    taskTemplates: evaluation.template.taskTemplates.map((t) => ({ id: t.id, name: t.name })),
    canStartEvaluation: evaluation.state === "Preparing",
    canStageNextTask: active && sync && openShared.length === 0,
    canForceStartTask: active && openShared.some((task) => task.state === "Preparing"),
    canAbortTask: active && openShared.length > 0,
    canAdjustDuration: active && openShared.some((task) => task.state === "Active"),
    canEndEvaluation: active,
    scoreboard: doc.scoreboard,
  };
}

/** Errors surfaced to the operator: nothing the server rejects may vanish. */
export interface Toast {
  kind: string;
  message: string;
  atMs: number;
}

export class ToastLog {
  readonly entries: Toast[] = [];

  constructor(private readonly keep = 6) {}

  push(kind: string, message: string, atMs: number): void {
    this.entries.push({ kind, message, atMs });
    while (this.entries.length > this.keep) this.entries.shift();
  }
}
