/** JSON shapes of the dialogue service API. */

export interface TargetCard {
  entity: string;
  /** slot name -> candidate values; exactly one of them is the true value */
  slots: Record<string, string[]>;
}

export interface CreateSessionResponse {
  session_id: string;
  agent: string;
  greeting: string;
  target_card?: TargetCard;
}

export interface AgentAct {
  kind: "request" | "inform";
  slot?: string;
  results?: number[];
  forced_by_horizon?: boolean;
}

export interface UtteranceReply {
  turn: number;
  done: boolean;
  rendered_text: string;
  agent_act: AgentAct;
  /** entity names, present when agent_act.kind === "inform" */
  results?: string[];
  /** 1-based rank of the eval-mode target among results, null if missed */
  target_rank?: number | null;
}

export interface TranscriptRecord {
  ts: number;
  session: string;
  event: string;
  [key: string]: unknown;
}

export interface SessionSummary {
  session_id: string;
  agent: string;
  status: string;
  turn: number;
  eval_mode: boolean;
  target_card: TargetCard | null;
  transcript: TranscriptRecord[];
}

export interface AgentInfo {
  name: string;
  checkpoint: string | null;
  trained: boolean;
}

export interface AgentsResponse {
  agents: AgentInfo[];
  kb: { rows: number; slots: string[] };
}

export interface FeedbackBody {
  success?: boolean;
  rank?: number | null;
  comment?: string;
}
