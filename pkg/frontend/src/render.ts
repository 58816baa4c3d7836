/** DOM rendering: the whole view is re-rendered from state on every event.
 *
 * All interactive elements carry `data-action` attributes; the controller
 * listens once on the root and dispatches by those, so re-rendering never
 * drops handlers.
 */

import type { ChatViewState } from "./state";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function clock(ts: number): string {
  return new Date(ts).toLocaleTimeString([], { hour12: false });
}

function bannerHtml(state: ChatViewState): string {
  if (!state.banner) return "";
  const label = state.banner.action === "restart" ? "restart" : "retry";
  return `<div id="banner" class="banner">
    <span class="banner-text">${esc(state.banner.message)}</span>
    <button data-action="${label}">${label}</button>
    <button data-action="dismiss">dismiss</button>
  </div>`;
}

function cardHtml(state: ChatViewState): string {
  const card = state.targetCard;
  if (!card) return "";
  const rows = Object.entries(card.slots)
    .map(([slot, values]) => {
      const chips = values
        .map((value) => {
          const sel = state.selected[slot] === value ? " selected" : "";
          return `<button class="chip${sel}" data-action="chip"
            data-slot="${esc(slot)}" data-value="${esc(value)}">${esc(value)}</button>`;
        })
        .join("");
      return `<div class="card-slot"><span class="slot-name">${esc(slot)}</span>${chips}</div>`;
    })
    .join("");
  return `<section id="target-card">
    <h2>find: <em>${esc(card.entity)}</em></h2>${rows}
  </section>`;
}

function messagesHtml(state: ChatViewState): string {
  const items = state.messages
    .map(
      (m) => `<li class="msg ${m.speaker}">
        <span class="speaker">${m.speaker}</span>
        <span class="text">${esc(m.text)}</span>
        <span class="ts">${clock(m.ts)}</span>
      </li>`,
    )
    .join("");
  return `<ul id="messages">${items}</ul>`;
}

function resultsHtml(state: ChatViewState): string {
  if (state.results.length === 0) return "";
  const found = state.feedback?.found === true;
  const items = state.results
    .map((name, i) => {
      const hit = found && state.targetRank === i + 1 ? ' class="hit"' : "";
      return `<li${hit}>${esc(name)}</li>`;
    })
    .join("");
  const note = state.informForced ? " (turn limit reached)" : "";
  return `<section id="results"><h2>results${note}</h2><ol>${items}</ol></section>`;
}

function feedbackHtml(state: ChatViewState): string {
  if (state.status !== "done") return "";
  const rank = state.targetRank;
  const rankNote = rank !== null ? ` (rank ${rank})` : "";
  return `<div id="feedback">
    <span>was the target in the list?</span>
    <button data-action="feedback-found"${rank === null ? " disabled" : ""}>
      found it${rankNote}</button>
    <button data-action="feedback-missed">not there</button>
  </div>`;
}

export function render(
  root: HTMLElement,
  state: ChatViewState,
  agentNames: readonly string[],
): void {
  const locked = state.inFlight || state.status !== "open";
  const options = agentNames
    .map((name) => {
      const sel = name === (state.agent ?? "rule-soft") ? " selected" : "";
      return `<option value="${esc(name)}"${sel}>${esc(name)}</option>`;
    })
    .join("");
  const pending = state.inFlight ? " …" : "";
  root.innerHTML = `
  <div class="chat">
    <header>
      <select id="agent-select"${state.inFlight ? " disabled" : ""}>${options}</select>
      <label><input type="checkbox" id="eval-mode" checked> eval mode</label>
      <button data-action="start"${state.inFlight ? " disabled" : ""}>
        ${state.status === "idle" ? "start" : "new session"}</button>
      <span id="status" data-status="${state.status}">${state.status}${pending}</span>
    </header>
    ${bannerHtml(state)}
    ${cardHtml(state)}
    ${messagesHtml(state)}
    ${resultsHtml(state)}
    ${feedbackHtml(state)}
    <footer>
      <input id="utterance" type="text" placeholder="say something"
        ${locked ? "disabled" : ""} autocomplete="off">
      <button data-action="send"${locked ? " disabled" : ""}>send</button>
    </footer>
  </div>`;
}
