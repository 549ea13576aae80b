/** Entry point: login, evaluation picker, hash routing to the four faces.
 *
 * Routes: #/viewer/<id>, #/participant/<id>, #/admin/<id>, #/judge/<id>.
 * The viewer route is meant to run full screen on a shared display.
 */

import { ApiClient, ApiError } from "./api.js";
import { h, replaceChildren } from "./dom.js";
import { mountAdmin, mountJudge, mountParticipant, mountViewer } from "./faces.js";

const api = new ApiClient("");
let unmount: (() => void) | null = null;
let role: string | null = null;

function root(): HTMLElement {
  return document.getElementById("app") as HTMLElement;
}

function renderLogin(message = ""): void {
  const username = h("input", { type: "text", placeholder: "username" }) as HTMLInputElement;
  const password = h("input", { type: "password", placeholder: "password" }) as HTMLInputElement;
  const note = h("p", { class: "error" }, message);
  const submit = async () => {
    try {
      const session = await api.login(username.value, password.value);
      role = session.role;
      window.location.hash = "#/evaluations";
    } catch (error) {
      note.textContent = error instanceof ApiError ? error.message : String(error);
    }
  };
  replaceChildren(
    root(),
    h(
      "form",
      {
        class: "login",
        onsubmit: (event: Event) => {
          event.preventDefault();
          void submit();
        },
      },
      h("h1", {}, "evaluation server"),
      username,
      password,
      h("button", { type: "submit" }, "log in"),
      note,
    ),
  );
}

async function renderPicker(): Promise<void> {
  const { evaluations } = await api.listEvaluations();
  const face = role === "admin" ? "admin" : role === "judge" ? "judge" : role === "viewer" ? "viewer" : "participant";
  replaceChildren(
    root(),
    h(
      "div",
      { class: "picker" },
      h("h1", {}, "evaluations"),
      ...evaluations.map((evaluation) =>
        h(
          "p",
          {},
          h(
            "a",
            { href: `#/${face}/${evaluation.id}` },
            `${evaluation.name} · ${evaluation.mode} · ${evaluation.state}`,
          ),
          role === "participant" ? h("a", { href: `#/viewer/${evaluation.id}`, class: "aside" }, " (viewer)") : null,
        ),
      ),
      evaluations.length === 0 ? h("p", { class: "idle" }, "nothing running yet") : null,
    ),
  );
}

function route(): void {
  if (unmount) {
    unmount();
    unmount = null;
  }
  const hash = window.location.hash || "#/login";
  const match = hash.match(/^#\/(viewer|participant|admin|judge)\/([^/]+)$/);
  if (match) {
    const [, face, evaluationId] = match;
    const ctx = { api, root: root(), evaluationId };
    if (face === "viewer") unmount = mountViewer(ctx);
    else if (face === "admin") unmount = mountAdmin(ctx);
    else if (face === "judge") unmount = mountJudge(ctx);
    else unmount = mountParticipant(ctx);
    return;
  }
  if (hash === "#/evaluations") {
    void renderPicker().catch(() => renderLogin("session expired, log in again"));
    return;
  }
  renderLogin();
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
