/** Chat view state and the pure reducer that builds it from API events.
 *
 * Every observable change — API responses, user sends, failures — is an
 * `ApiEvent`, and the rendered view is a fold of those events. Replaying a
 * recorded event list therefore reproduces the exact same view, which is
 * what the replay tests assert.
 */

import type { TargetCard, UtteranceReply } from "./types";

export interface Message {
  speaker: "user" | "agent";
  text: string;
  ts: number;
}

export interface Banner {
  message: string;
  /** "restart" when the session is unrecoverable (e.g. 404); else "retry". */
  action: "retry" | "restart";
}

export type Status = "idle" | "starting" | "open" | "done" | "closed";

export interface ChatViewState {
  sessionId: string | null;
  agent: string | null;
  status: Status;
  messages: Message[];
  targetCard: TargetCard | null;
  /** chip selection per slot — the value the user believes is right */
  selected: Record<string, string>;
  results: string[];
  targetRank: number | null;
  informForced: boolean;
  feedback: { found: boolean; rank: number | null } | null;
  banner: Banner | null;
  /** exactly one request may be in flight; input is locked meanwhile */
  inFlight: boolean;
}

export type ApiEvent =
  | { t: "start_requested"; agent: string }
  | {
      t: "session_started";
      ts: number;
      sessionId: string;
      agent: string;
      greeting: string;
      targetCard: TargetCard | null;
    }
  | { t: "utterance_sent"; ts: number; text: string }
  | { t: "agent_replied"; ts: number; reply: UtteranceReply }
  | { t: "chip_selected"; slot: string; value: string }
  | { t: "feedback_requested"; found: boolean; rank: number | null }
  | { t: "feedback_confirmed"; ts: number; found: boolean; rank: number | null }
  | { t: "op_retried" }
  | { t: "request_failed"; status: number | null; message: string }
  | { t: "banner_dismissed" };

export function initialState(): ChatViewState {
  return {
    sessionId: null,
    agent: null,
    status: "idle",
    messages: [],
    targetCard: null,
    selected: {},
    results: [],
    targetRank: null,
    informForced: false,
    feedback: null,
    banner: null,
    inFlight: false,
  };
}

function appended(
  state: ChatViewState,
  speaker: "user" | "agent",
  text: string,
  ts: number,
): Message[] {
  return [...state.messages, { speaker, text, ts }];
}

export function reduce(state: ChatViewState, event: ApiEvent): ChatViewState {
  switch (event.t) {
    case "start_requested":
      // A new session replaces any previous one: one active session per tab.
      return {
        ...initialState(),
        agent: event.agent,
        status: "starting",
        inFlight: true,
      };
    case "session_started":
      return {
        ...state,
        sessionId: event.sessionId,
        agent: event.agent,
        status: "open",
        messages: appended(state, "agent", event.greeting, event.ts),
        targetCard: event.targetCard,
        banner: null,
        inFlight: false,
      };
    case "utterance_sent":
      return {
        ...state,
        messages: appended(state, "user", event.text, event.ts),
        inFlight: true,
      };
    case "agent_replied": {
      const reply = event.reply;
      const next: ChatViewState = {
        ...state,
        messages: appended(state, "agent", reply.rendered_text, event.ts),
        banner: null,
        inFlight: false,
      };
      if (reply.done) {
        next.status = "done";
        next.results = reply.results ?? [];
        next.targetRank = reply.target_rank ?? null;
        next.informForced = reply.agent_act.forced_by_horizon === true;
      }
      return next;
    }
    case "chip_selected":
      return {
        ...state,
        selected: { ...state.selected, [event.slot]: event.value },
      };
    case "feedback_requested":
      return { ...state, inFlight: true };
    case "feedback_confirmed": {
      const text = event.found
        ? `found the target${event.rank !== null ? ` (rank ${event.rank})` : ""}`
        : "did not find the target";
      return {
        ...state,
        messages: appended(state, "user", text, event.ts),
        feedback: { found: event.found, rank: event.rank },
        status: "closed",
        banner: null,
        inFlight: false,
      };
    }
    case "op_retried":
      return { ...state, banner: null, inFlight: true };
    case "request_failed":
      return {
        ...state,
        banner: {
          message: event.message,
          action:
            event.status === 404 || event.status === 409 ? "restart" : "retry",
        },
        inFlight: false,
      };
    case "banner_dismissed":
      return { ...state, banner: null };
  }
}

/** Fold a recorded event list into the view it produces. */
export function replay(events: readonly ApiEvent[]): ChatViewState {
  return events.reduce(reduce, initialState());
}
