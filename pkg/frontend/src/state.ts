// Client session view: a pure fold of (REST snapshot, event stream).
// Rendered state is derivable from these inputs alone, so a page refresh
// reconstructs exactly the same view. Snapshot fields are authoritative;
// events patch phase/tables/budget between snapshot refreshes, and
// warning/error events land in an ephemeral notices list (toasts only).

import type {
  LedgerSnapshot,
  Phase,
  SessionEvent,
  SessionSnapshot,
  StageTable,
} from './types';

export interface SessionView {
  sessionId: string;
  phase: Phase;
  ideasTable: StageTable | null;
  experimentTable: StageTable | null;
  snapshot: SessionSnapshot;
  budget: LedgerSnapshot;
  warnings: string[];
  notices: string[];
  cursor: number;
}

export function viewFromSnapshot(snapshot: SessionSnapshot, cursor = 0): SessionView {
  return {
    sessionId: snapshot.id,
    phase: snapshot.phase,
    ideasTable: snapshot.tables['ideas'] ?? null,
    experimentTable: snapshot.tables['experiment'] ?? null,
    snapshot,
    budget: snapshot.ledger,
    warnings: [...snapshot.warnings],
    notices: [],
    cursor,
  };
}

export function applyEvent(view: SessionView, event: SessionEvent): SessionView {
  if (event.seq <= view.cursor) return view;
  const next: SessionView = { ...view, cursor: event.seq };
  switch (event.kind) {
    case 'phase_change': {
      next.phase = event.payload['phase'] as Phase;
      next.snapshot = { ...next.snapshot, phase: next.phase };
      break;
    }
    case 'table_update': {
      const name = event.payload['name'] as string;
      const table = event.payload['table'] as unknown as StageTable;
      next.snapshot = {
        ...next.snapshot,
        tables: { ...next.snapshot.tables, [name]: table },
      };
      if (name === 'ideas') next.ideasTable = table;
      if (name === 'experiment') next.experimentTable = table;
      break;
    }
    case 'cost_update': {
      next.budget = event.payload as unknown as LedgerSnapshot;
      break;
    }
    case 'warning':
    case 'error': {
      next.notices = [...next.notices, `${event.kind}: ${JSON.stringify(event.payload)}`];
      break;
    }
    case 'log':
      break;
  }
  return next;
}

export function buildView(snapshot: SessionSnapshot, events: SessionEvent[]): SessionView {
  let view = viewFromSnapshot(snapshot);
  for (const event of events) {
    view = applyEvent(view, event);
  }
  return view;
}

/** Durable projection of a view: everything pages render, minus toasts. */
export function viewFingerprint(view: SessionView): string {
  return JSON.stringify({
    sessionId: view.sessionId,
    phase: view.phase,
    ideasTable: view.ideasTable,
    experimentTable: view.experimentTable,
    budget: view.budget,
  });
}
