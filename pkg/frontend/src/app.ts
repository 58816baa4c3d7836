/** Controller: wires the API client, the reducer, and the renderer.
 *
 * All server work flows through `runOp`, which keeps exactly one request in
 * flight and remembers the operation for the banner's retry button. The view
 * is re-rendered from state after every event; the utterance draft and the
 * eval-mode checkbox are the only bits of ephemeral DOM state carried across
 * renders.
 */

import { ApiClient, ApiError } from "./api";
import { render } from "./render";
import {
  initialState,
  reduce,
  type ApiEvent,
  type ChatViewState,
} from "./state";

const FALLBACK_AGENTS = ["rule-soft", "rule-hard", "rule-no-kb", "max"];

export class ChatApp {
  state: ChatViewState = initialState();
  /** every event ever applied, in order — the replayable transcript */
  events: ApiEvent[] = [];
  agentNames: readonly string[] = FALLBACK_AGENTS;

  private pending: Promise<void> = Promise.resolve();
  private lastOp: (() => Promise<void>) | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {
    root.addEventListener("click", (ev) => this.onClick(ev));
    root.addEventListener("keydown", (ev) => this.onKeydown(ev));
    this.renderNow();
  }

  /** Resolves when the current in-flight operation (if any) has settled. */
  settled(): Promise<void> {
    return this.pending;
  }

  dispatch(event: ApiEvent): void {
    this.state = reduce(this.state, event);
    this.events.push(event);
    this.renderNow();
  }

  async boot(): Promise<void> {
    await this.runOp(async () => {
      const listing = await this.api.agents();
      this.agentNames = listing.agents.map((a) => a.name);
      this.renderNow();
    });
  }

  async start(): Promise<void> {
    if (this.state.inFlight) return;
    const agent = this.selectValue("#agent-select") ?? "rule-soft";
    const evalMode = this.checkbox("#eval-mode")?.checked ?? true;
    await this.runOp(async () => {
      this.dispatch({ t: "start_requested", agent });
      const resp = await this.api.createSession(agent, evalMode);
      this.dispatch({
        t: "session_started",
        ts: Date.now(),
        sessionId: resp.session_id,
        agent: resp.agent,
        greeting: resp.greeting,
        targetCard: resp.target_card ?? null,
      });
    });
  }

  async send(): Promise<void> {
    if (this.state.inFlight || this.state.status !== "open") return;
    const input = this.input();
    const text = input?.value.trim() ?? "";
    const sessionId = this.state.sessionId;
    if (!text || !input || sessionId === null) return;
    input.value = "";
    this.dispatch({ t: "utterance_sent", ts: Date.now(), text });
    await this.runOp(async () => {
      const reply = await this.api.sendUtterance(sessionId, text);
      this.dispatch({ t: "agent_replied", ts: Date.now(), reply });
    });
  }

  async sendFeedback(found: boolean): Promise<void> {
    if (this.state.inFlight || this.state.status !== "done") return;
    const sessionId = this.state.sessionId;
    if (sessionId === null) return;
    const rank = found ? this.state.targetRank : null;
    this.dispatch({ t: "feedback_requested", found, rank });
    await this.runOp(async () => {
      await this.api.sendFeedback(sessionId, { success: found, rank });
      this.dispatch({ t: "feedback_confirmed", ts: Date.now(), found, rank });
    });
  }

  async retry(): Promise<void> {
    const op = this.lastOp;
    if (!op || this.state.inFlight) return;
    this.dispatch({ t: "op_retried" });
    await this.runOp(op);
  }

  private async runOp(op: () => Promise<void>): Promise<void> {
    this.lastOp = op;
    const run = op().catch((err: unknown) => this.fail(err));
    this.pending = run;
    await run;
  }

  private fail(err: unknown): void {
    const status = err instanceof ApiError ? err.status : null;
    const message = err instanceof Error ? err.message : String(err);
    this.dispatch({ t: "request_failed", status, message });
  }

  private onClick(ev: Event): void {
    const target = (ev.target as HTMLElement | null)?.closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    switch (target.dataset.action) {
      case "start":
      case "restart":
        void this.start();
        break;
      case "send":
        void this.send();
        break;
      case "retry":
        void this.retry();
        break;
      case "dismiss":
        this.dispatch({ t: "banner_dismissed" });
        break;
      case "feedback-found":
        void this.sendFeedback(true);
        break;
      case "feedback-missed":
        void this.sendFeedback(false);
        break;
      case "chip": {
        const slot = target.dataset.slot ?? "";
        const value = target.dataset.value ?? "";
        this.dispatch({ t: "chip_selected", slot, value });
        const input = this.input();
        if (input && !input.disabled) input.value = `the ${slot} is ${value}`;
        break;
      }
    }
  }

  private onKeydown(ev: Event): void {
    const key = (ev as KeyboardEvent).key;
    const target = ev.target as HTMLElement | null;
    if (key === "Enter" && target?.id === "utterance") void this.send();
  }

  private renderNow(): void {
    const draft = this.input()?.value ?? "";
    const evalMode = this.checkbox("#eval-mode")?.checked ?? true;
    render(this.root, this.state, this.agentNames);
    const input = this.input();
    if (input) input.value = draft;
    const box = this.checkbox("#eval-mode");
    if (box) box.checked = evalMode;
  }

  private input(): HTMLInputElement | null {
    return this.root.querySelector<HTMLInputElement>("#utterance");
  }

  private checkbox(selector: string): HTMLInputElement | null {
    return this.root.querySelector<HTMLInputElement>(selector);
  }

  private selectValue(selector: string): string | null {
    return this.root.querySelector<HTMLSelectElement>(selector)?.value ?? null;
  }
}
