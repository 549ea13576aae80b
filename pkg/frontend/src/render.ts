/** Shared render fragments: scoreboard, hint channels, countdown. */

import type { ApiClient, HintDoc, ScoreboardRow } from "./api.js";
import { formatCountdown } from "./clock.js";
import { h } from "./dom.js";

export function scoreboardTable(rows: ScoreboardRow[]): HTMLElement {
  const groups = [...new Set(rows.flatMap((row) => Object.keys(row.perGroupScores)))];
  const header = h(
    "tr",
    {},
    h("th", {}, "#"),
    h("th", { class: "team" }, "Team"),
    ...groups.map((group) => h("th", {}, group)),
    h("th", {}, "Total"),
  );
  const body = rows.map((row) =>
    h(
      "tr",
      {},
      h("td", {}, String(row.rank)),
      h("td", { class: "team" }, row.teamName),
      ...groups.map((group) =>
        h("td", {}, (row.perGroupScores[group] ?? 0).toFixed(1)),
      ),
      h("td", { class: "total" }, row.total.toFixed(1)),
    ),
  );
  return h("table", { class: "scoreboard" }, header, ...body);
}

export function countdownBlock(ms: number | null): HTMLElement {
  return h("div", { class: "countdown" }, formatCountdown(ms));
}

export function hintBlock(hint: HintDoc, api: ApiClient, collectionId: string): HTMLElement {
  const box = h("div", { class: `hint hint-${hint.channel}` });
  const payload = hint.payload;
  if (hint.channel === "text" && payload?.text) {
    box.append(h("p", { class: "hint-text" }, payload.text));
    return box;
  }
  if (payload?.itemId) {
    const src = api.mediaUrl(collectionId, payload.itemId);
    if (hint.channel === "image") {
      box.append(h("img", { src, alt: payload.itemId }));
    } else if (hint.channel === "video") {
      const video = h("video", { src, controls: true, autoplay: true, muted: true }) as HTMLVideoElement;
      const range = payload.range;
      if (range) {
        video.addEventListener("loadedmetadata", () => {
          video.currentTime = range.startMs / 1000;
        });
        video.addEventListener("timeupdate", () => {
          if (video.currentTime * 1000 >= range.endMs) video.currentTime = range.startMs / 1000;
        });
      }
      box.append(video);
    } else if (hint.channel === "audio") {
      box.append(h("audio", { src, controls: true, autoplay: true, loop: true }));
    }
    return box;
  }
  if (hint.resource) {
    const src = `/api/v1/resources/${encodeURIComponent(hint.resource)}`;
    if (hint.channel === "image") {
      box.append(h("img", { src, alt: hint.resource }));
    } else if (hint.channel === "audio") {
      box.append(h("audio", { src, controls: true, autoplay: true, loop: true }));
    } else if (hint.channel === "video") {
      box.append(h("video", { src, controls: true, autoplay: true, muted: true }));
    } else {
      box.append(h("p", { class: "hint-resource" }, hint.resource));
    }
  }
  return box;
}
