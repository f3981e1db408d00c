// Wire schema mirrors for the pipeline service. Field names match the
// backend's canonical JSON exactly; the client never invents state.

export type Phase =
  | 'configured'
  | 'thinking'
  | 'idea_ready'
  | 'coding'
  | 'awaiting_human'
  | 'code_ready'
  | 'writing'
  | 'paper_ready'
  | 'reviewing'
  | 'done'
  | 'terminated'
  | 'blocked';

export type EventKind =
  | 'phase_change'
  | 'table_update'
  | 'cost_update'
  | 'warning'
  | 'error'
  | 'log';

export interface SessionEvent {
  seq: number;
  kind: EventKind;
  payload: Record<string, unknown>;
  timestamp: string;
}

export interface StageTable {
  columns: [string, string][];
  rows: Record<string, unknown>[];
  provenance: string;
  version: number;
  journal: unknown[];
}

export interface ScoreEntry {
  value: number;
  reason: string;
}

export interface Idea {
  title: string;
  narrative: Record<string, string>;
  experiment_plan: string;
  comparison_rows: {
    title: string;
    venue_year: string;
    similarity_note: string;
    difference_note: string;
  }[];
  scores: Record<string, ScoreEntry>;
  status: string;
  extra: Record<string, unknown>;
}

export interface LedgerSnapshot {
  total_budget: string;
  total_spent: string;
  state: 'active' | 'warning' | 'terminated';
  entries: number;
  per_stage: Record<string, string>;
}

export interface CodingSessionState {
  workdir: string;
  run_index: number;
  max_runs: number;
  status: string;
  transcript: { role: string; text: string }[];
  successful_runs: number[];
  command_log: string[][];
}

export interface SessionSnapshot {
  id: string;
  phase: Phase;
  intent: { text: string; system_prompt_override: string | null } | null;
  ideas: Idea[];
  selected_index: number | null;
  coding_session: CodingSessionState | null;
  artifacts: Record<string, unknown>;
  warnings: string[];
  tables: Record<string, StageTable>;
  event_seq: number;
  ledger: LedgerSnapshot;
}

export interface Review {
  summary: string;
  strengths: string[];
  weaknesses: string[];
  questions: string[];
  limitations: string[];
  ratings: Record<string, number>;
  overall: number;
  confidence: number;
  ethical_concerns: boolean;
  decision: 'Accept' | 'Reject';
  source_review_count?: number;
}

export interface TableEdit {
  row?: number;
  column?: string;
  new_value?: unknown;
  add_row?: boolean;
  cells?: Record<string, unknown>;
}
