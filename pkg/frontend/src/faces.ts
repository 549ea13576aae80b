/** The four faces: viewer (projector), admin console, participant, judge.
 *
 * Each face is a render function over its view model plus the wiring that
 * polls state, re-renders on a fast local tick (so hint reveals and
 * countdowns do not wait for the next poll), and surfaces every rejected
 * action as a toast.
 */

import { ApiClient, ApiError } from "./api.js";
import type { AdminStateDoc, ParticipantStateDoc, ViewerStateDoc } from "./api.js";
import { ServerClock } from "./clock.js";
import { h, replaceChildren } from "./dom.js";
import { HintSchedule } from "./hints.js";
import { JudgeFlow } from "./judge.js";
import { Poller, RENDER_TICK_MS } from "./poll.js";
import { countdownBlock, hintBlock, scoreboardTable } from "./render.js";
import {
  ToastLog,
  adminViewModel,
  participantViewModel,
  viewerViewModel,
} from "./viewmodel.js";

interface FaceContext {
  api: ApiClient;
  root: HTMLElement;
  evaluationId: string;
}

function toastList(toasts: ToastLog): HTMLElement {
  return h(
    "div",
    { class: "toasts" },
    ...toasts.entries.map((toast) => h("div", { class: "toast" }, `${toast.kind}: ${toast.message}`)),
  );
}

function describeError(error: unknown): [string, string] {
  if (error instanceof ApiError) return [error.kind, error.message];
  return ["connection", String(error)];
}

function faceShell(title: string): { shell: HTMLElement; body: HTMLElement } {
  const body = h("div", { class: "face-body" });
  const shell = h("div", { class: "face" }, h("h1", {}, title), body);
  return { shell, body };
}

/** Big-screen task presentation: hints reveal on schedule, scores live. */
export function mountViewer(ctx: FaceContext): () => void {
  const clock = new ServerClock();
  const schedule = new HintSchedule();
  let doc: ViewerStateDoc | null = null;
  let offline = false;
  const { shell, body } = faceShell("Task presentation");
  replaceChildren(ctx.root, shell);

  const render = () => {
    if (doc === null) return;
    const vm = viewerViewModel(doc, schedule, clock.serverNow(Date.now()));
    const pieces: (HTMLElement | string)[] = [];
    if (offline) pieces.push(h("div", { class: "banner" }, "connection lost, retrying"));
    if (vm.task && vm.task.state === "Active") {
      pieces.push(h("h2", {}, vm.task.name), countdownBlock(vm.task.countdownMs));
      pieces.push(
        h(
          "div",
          { class: "hints" },
          ...vm.task.visibleHints.map((hint) => hintBlock(hint, ctx.api, vm.task!.collectionId)),
        ),
      );
    } else if (vm.task && vm.task.state === "Preparing") {
      pieces.push(h("h2", {}, `${vm.task.name} starting soon`));
      pieces.push(h("p", {}, `ready: ${vm.readyTeams.join(", ") || "nobody yet"}`));
    } else if (vm.evaluationState === "Ended") {
      pieces.push(h("h2", {}, "evaluation ended"));
    } else if (vm.task === null) {
      pieces.push(h("h2", { class: "idle" }, "waiting for the next task"));
    }
    if (vm.task && vm.task.state === "Ended") {
      pieces.push(h("div", { class: "overlay" }, "task ended"));
    }
    pieces.push(scoreboardTable(vm.scoreboard));
    replaceChildren(body, ...pieces);
  };

  const poller = new Poller(
    async () => {
      const next = await ctx.api.state<ViewerStateDoc>(ctx.evaluationId);
      clock.sync(next.serverTimeMs, Date.now());
      if (doc?.activeTask?.taskRunId !== next.activeTask?.taskRunId) schedule.reset();
      doc = next;
      offline = false;
      render();
    },
    () => {
      offline = true;
      render();
    },
  );
  poller.start();
  const ticker = setInterval(render, RENDER_TICK_MS);
  return () => {
    poller.stop();
    clearInterval(ticker);
  };
}

/** Conductor console: stage/start/abort tasks, bend time, close the run. */
export function mountAdmin(ctx: FaceContext): () => void {
  const clock = new ServerClock();
  const toasts = new ToastLog();
  let doc: AdminStateDoc | null = null;
  const { shell, body } = faceShell("Evaluation administration");
  replaceChildren(ctx.root, shell);

  const command = (payload: Record<string, unknown>) => {
    void ctx.api
      .adminCommand(ctx.evaluationId, payload)
      .then(() => refresh())
      .catch((error) => {
        const [kind, message] = describeError(error);
        toasts.push(kind, message, clock.serverNow(Date.now()));
        render();
      });
  };

  const render = () => {
    if (doc === null) return;
    const vm = adminViewModel(doc, clock.serverNow(Date.now()));
    const templatePicker = h("select", { id: "template-pick" }) as HTMLSelectElement;
    for (const tpl of vm.taskTemplates) {
      templatePicker.append(h("option", { value: tpl.id }, tpl.name));
    }
    const controls = h(
      "div",
      { class: "controls" },
      h("button", {
        onclick: () => command({ command: "startEvaluation" }),
        disabled: !vm.canStartEvaluation,
      }, "start evaluation"),
      templatePicker,
      h("button", {
        onclick: () => command({ command: "nextTask", templateId: templatePicker.value }),
        disabled: !vm.canStageNextTask,
      }, "stage task"),
      h("button", {
        onclick: () => command({ command: "startTask" }),
        disabled: !vm.canForceStartTask,
      }, "force start"),
      h("button", {
        onclick: () => command({ command: "abortTask" }),
        disabled: !vm.canAbortTask,
      }, "abort task"),
      h("button", {
        onclick: () => command({ command: "adjustDuration", deltaMs: 60_000 }),
        disabled: !vm.canAdjustDuration,
      }, "+60 s"),
      h("button", {
        onclick: () => command({ command: "adjustDuration", deltaMs: -60_000 }),
        disabled: !vm.canAdjustDuration,
      }, "-60 s"),
      h("button", {
        onclick: () => {
          const open = vm.tasks.some((task) => task.state !== "Ended");
          if (!open || window.confirm("Tasks are still open. Force-close the evaluation?")) {
            command({ command: "endEvaluation", force: open });
          }
        },
        disabled: !vm.canEndEvaluation,
      }, "end evaluation"),
    );
    const rows = vm.tasks.map((task) =>
      h(
        "tr",
        {},
        h("td", {}, task.templateId),
        h("td", {}, task.scope ?? "shared"),
        h("td", {}, task.state),
        h("td", {}, task.countdownMs === null ? "-" : `${Math.ceil(task.countdownMs / 1000)}s`),
        h("td", {}, String(task.submissionCount)),
        h("td", {}, task.endReason ?? ""),
      ),
    );
    replaceChildren(
      body,
      h("p", {}, `state: ${vm.evaluationState} · mode: ${vm.mode} · open judgements: ${vm.openJudgements}`),
      controls,
      h(
        "table",
        { class: "tasks" },
        h("tr", {}, h("th", {}, "task"), h("th", {}, "scope"), h("th", {}, "state"), h("th", {}, "left"), h("th", {}, "subs"), h("th", {}, "ended")),
        ...rows,
      ),
      scoreboardTable(vm.scoreboard),
      toastList(toasts),
    );
  };

  const refresh = async () => {
    const next = await ctx.api.state<AdminStateDoc>(ctx.evaluationId);
    clock.sync(next.serverTimeMs, Date.now());
    doc = next;
    render();
  };

  const poller = new Poller(refresh, (error) => {
    const [kind, message] = describeError(error);
    toasts.push(kind, message, clock.serverNow(Date.now()));
    render();
  });
  poller.start();
  const ticker = setInterval(render, RENDER_TICK_MS);
  return () => {
    poller.stop();
    clearInterval(ticker);
  };
}

/** Participant face: readiness, own task with hints, own submissions. */
export function mountParticipant(ctx: FaceContext): () => void {
  const clock = new ServerClock();
  const schedule = new HintSchedule();
  const toasts = new ToastLog();
  let doc: ParticipantStateDoc | null = null;
  let lastTaskId: string | null = null;
  const { shell, body } = faceShell("Participant");
  replaceChildren(ctx.root, shell);

  const act = (run: () => Promise<unknown>) => {
    void run()
      .then(() => refresh())
      .catch((error) => {
        const [kind, message] = describeError(error);
        toasts.push(kind, message, clock.serverNow(Date.now()));
        render();
      });
  };

  const render = () => {
    if (doc === null) return;
    const vm = participantViewModel(doc, schedule, clock.serverNow(Date.now()));
    const pieces: (HTMLElement | string)[] = [
      h("p", {}, `${vm.evaluationName} · team ${vm.teamName} · ${vm.evaluationState}`),
    ];
    if (vm.task) {
      pieces.push(h("h2", {}, `${vm.task.name} (${vm.task.state})`));
      if (vm.task.state === "Active") {
        pieces.push(countdownBlock(vm.task.countdownMs));
        pieces.push(
          h(
            "div",
            { class: "hints" },
            ...vm.task.visibleHints.map((hint) => hintBlock(hint, ctx.api, vm.task!.collectionId)),
          ),
        );
      }
      if (vm.readyEnabled) {
        pieces.push(
          h("button", { onclick: () => act(() => ctx.api.ready(ctx.evaluationId)) }, "ready for the task"),
        );
      } else if (vm.task.state === "Preparing") {
        pieces.push(h("p", {}, "waiting for the other teams"));
      }
    }
    for (const templateId of vm.nextTaskChoices) {
      pieces.push(
        h(
          "button",
          { onclick: () => act(() => ctx.api.nextTask(ctx.evaluationId, templateId)) },
          `start ${templateId}`,
        ),
      );
    }
    if (!vm.task && vm.nextTaskChoices.length === 0 && vm.evaluationState !== "Ended") {
      pieces.push(h("p", { class: "idle" }, "no task right now"));
    }
    if (vm.evaluationState === "Ended" || (vm.mode === "interactiveAsync" && vm.nextTaskChoices.length === 0 && !vm.task)) {
      pieces.push(h("h3", {}, "all tasks completed"));
    }
    if (vm.ownSubmissions.length) {
      pieces.push(
        h(
          "ul",
          { class: "submissions" },
          ...vm.ownSubmissions.map((submission) =>
            h("li", {}, `${Math.round(submission.receivedAtMs / 1000)}s · ${submission.status}`),
          ),
        ),
      );
    }
    pieces.push(scoreboardTable(vm.scoreboard), toastList(toasts));
    replaceChildren(body, ...pieces);
  };

  const refresh = async () => {
    const next = await ctx.api.state<ParticipantStateDoc>(ctx.evaluationId);
    clock.sync(next.serverTimeMs, Date.now());
    const taskId = next.task?.taskRunId ?? null;
    if (taskId !== lastTaskId) {
      schedule.reset();
      lastTaskId = taskId;
    }
    doc = next;
    render();
  };

  const poller = new Poller(refresh, (error) => {
    const [kind, message] = describeError(error);
    toasts.push(kind, message, clock.serverNow(Date.now()));
    render();
  });
  poller.start();
  const ticker = setInterval(render, RENDER_TICK_MS);
  return () => {
    poller.stop();
    clearInterval(ticker);
  };
}

/** Assessor workbench: payload next to the task description, auto-advance. */
export function mountJudge(ctx: FaceContext): () => void {
  const toasts = new ToastLog();
  const { shell, body } = faceShell("Judgement");
  replaceChildren(ctx.root, shell);

  const flow = new JudgeFlow(ctx.api, ctx.evaluationId, () => render());

  const render = () => {
    const state = flow.state;
    const pieces: (HTMLElement | string)[] = [];
    if (state.phase === "judging" && state.request) {
      const request = state.request;
      pieces.push(h("h2", {}, request.taskName));
      pieces.push(...request.taskDescription.map((line) => h("p", { class: "hint-text" }, line)));
      if (request.payload.text) {
        pieces.push(h("blockquote", { class: "answer-text" }, request.payload.text));
      } else if (request.mediaRef) {
        const src = ctx.api.mediaUrl(request.mediaRef.collectionId, request.mediaRef.itemName);
        const video = h("video", { src, controls: true, autoplay: true }) as HTMLVideoElement;
        const range = request.payload.range;
        if (range) {
          video.addEventListener("loadedmetadata", () => {
            video.currentTime = range.startMs / 1000;
          });
        }
        pieces.push(video);
        if (range) pieces.push(h("p", {}, `segment ${range.startMs}–${range.endMs} ms`));
      }
      const slider = h("input", { type: "range", min: "0", max: "100", value: "50" }) as HTMLInputElement;
      pieces.push(
        h(
          "div",
          { class: "verdict-controls" },
          h("button", { onclick: () => void flow.render(1.0) }, "correct"),
          h("button", { onclick: () => void flow.render(0.0) }, "wrong"),
          h("button", { onclick: () => void flow.render(null) }, "undecidable"),
          slider,
          h("button", { onclick: () => void flow.render(Number(slider.value) / 100) }, "graded"),
        ),
      );
    } else if (state.phase === "submitting") {
      pieces.push(h("p", {}, "submitting verdict"));
    } else {
      pieces.push(h("p", { class: "idle" }, "queue empty, watching for work"));
    }
    pieces.push(toastList(toasts));
    replaceChildren(body, ...pieces);
  };

  const poller = new Poller(
    async () => {
      if (flow.state.phase === "idle") await flow.advance();
    },
    (error) => {
      const [kind, message] = describeError(error);
      toasts.push(kind, message, Date.now());
      render();
    },
    2_000,
  );
  poller.start();
  render();
  return () => poller.stop();
}
