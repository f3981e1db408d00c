// In-memory double of the pipeline service, implementing the documented
// REST + SSE contract: 202-async actions, canonical snapshots, versioned
// table edits with 409 on staleness, and a cursor-addressed event stream.

import type {
  Idea,
  LedgerSnapshot,
  Phase,
  SessionEvent,
  SessionSnapshot,
  StageTable,
} from '../src/types';

const ABSORBING: Phase[] = ['done', 'terminated', 'blocked'];

const IDEA_COLUMNS: [string, string][] = [
  ['title', 'Title'],
  ['novelty_notes', 'Novelty vs related work'],
  ['impact', 'Impact'],
  ['feasibility', 'Feasibility'],
  ['novelty', 'Novelty'],
  ['status', 'Status'],
];

function makeIdea(title: string, parentIndex?: number): Idea {
  return {
    title,
    narrative: {
      problem: `${title}: problem statement`,
      importance: 'it matters',
      difficulty: 'it is hard',
      gap: 'prior work stops short',
      approach: 'a concrete approach',
    },
    experiment_plan: 'Evaluate ResNet18 on MNIST measuring accuracy.',
    comparison_rows: [
      {
        title: 'Prefix Caching at Scale',
        venue_year: 'MLSys 2023',
        similarity_note: 'related mechanism',
        difference_note: 'no partial overlap handling',
      },
    ],
    scores: {
      impact: { value: 70, reason: 'r' },
      feasibility: { value: 60, reason: 'r' },
      novelty: { value: 80, reason: 'r' },
    },
    status: parentIndex === undefined ? 'draft' : 'refined',
    extra: parentIndex === undefined ? {} : { parent_index: parentIndex },
  };
}

function ideaTable(ideas: Idea[], version: number, journal: unknown[]): StageTable {
  return {
    columns: IDEA_COLUMNS,
    rows: ideas.map((idea) => ({
      title: idea.title,
      novelty_notes: idea.comparison_rows
        .map((row) => `vs ${row.title}: ${row.difference_note}`)
        .join('; '),
      impact: idea.scores['impact'].value,
      feasibility: idea.scores['feasibility'].value,
      novelty: idea.scores['novelty'].value,
      status: idea.status,
    })),
    provenance: 'thinker',
    version,
    journal: [...journal],
  };
}

// --- minimal stored-entry zip ---------------------------------------------------

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(data: Uint8Array): number {
  let crc = 0xffffffff;
  for (const byte of data) crc = CRC_TABLE[(crc ^ byte) & 0xff] ^ (crc >>> 8);
  return (crc ^ 0xffffffff) >>> 0;
}

export function buildZip(entries: Record<string, string>): Uint8Array {
  const encoder = new TextEncoder();
  const chunks: Uint8Array[] = [];
  const central: Uint8Array[] = [];
  let offset = 0;
  const u16 = (v: number) => new Uint8Array([v & 0xff, (v >> 8) & 0xff]);
  const u32 = (v: number) =>
    new Uint8Array([v & 0xff, (v >> 8) & 0xff, (v >> 16) & 0xff, (v >> 24) & 0xff]);
  const concat = (...parts: Uint8Array[]) => {
    const total = parts.reduce((sum, p) => sum + p.length, 0);
    const out = new Uint8Array(total);
    let pos = 0;
    for (const part of parts) {
      out.set(part, pos);
      pos += part.length;
    }
    return out;
  };

  for (const [name, content] of Object.entries(entries)) {
    const nameBytes = encoder.encode(name);
    const data = encoder.encode(content);
    const crc = crc32(data);
    const local = concat(
      u32(0x04034b50), u16(20), u16(0), u16(0), u16(0), u16(0),
      u32(crc), u32(data.length), u32(data.length),
      u16(nameBytes.length), u16(0), nameBytes, data,
    );
    central.push(
      concat(
        u32(0x02014b50), u16(20), u16(20), u16(0), u16(0), u16(0), u16(0),
        u32(crc), u32(data.length), u32(data.length),
        u16(nameBytes.length), u16(0), u16(0), u16(0), u16(0),
        u32(0), u32(offset), nameBytes,
      ),
    );
    chunks.push(local);
    offset += local.length;
  }
  const centralBlob = concat(...central);
  const eocd = concat(
    u32(0x06054b50), u16(0), u16(0),
    u16(central.length), u16(central.length),
    u32(centralBlob.length), u32(offset), u16(0),
  );
  return concat(...chunks, centralBlob, eocd);
}

export function zipEntryNames(buffer: ArrayBuffer): string[] {
  const bytes = new Uint8Array(buffer);
  const names: string[] = [];
  const decoder = new TextDecoder();
  for (let i = 0; i + 4 <= bytes.length; i++) {
    if (
      bytes[i] === 0x50 && bytes[i + 1] === 0x4b && bytes[i + 2] === 0x01 && bytes[i + 3] === 0x02
    ) {
      const nameLength = bytes[i + 28] | (bytes[i + 29] << 8);
      names.push(decoder.decode(bytes.slice(i + 46, i + 46 + nameLength)));
    }
  }
  return names;
}

// --- the fake session ---------------------------------------------------------------

class FakeSession {
  phase: Phase = 'configured';
  ideas: Idea[] = [];
  selectedIndex: number | null = null;
  tables: Record<string, StageTable> = {};
  journal: unknown[] = [];
  warnings: string[] = [];
  events: SessionEvent[] = [];
  spent = 0;
  charges = 0;
  private seq = 0;
  private waiters: (() => void)[] = [];

  constructor(
    public id: string,
    public budget: string,
  ) {}

  emit(kind: SessionEvent['kind'], payload: Record<string, unknown>): void {
    this.seq += 1;
    this.events.push({ seq: this.seq, kind, payload, timestamp: new Date().toISOString() });
    const waiters = this.waiters;
    this.waiters = [];
    waiters.forEach((resolve) => resolve());
  }

  waitForEvent(): Promise<void> {
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  transition(phase: Phase): void {
    this.phase = phase;
    this.emit('phase_change', { phase });
  }

  ledger(): LedgerSnapshot {
    return {
      total_budget: this.budget,
      total_spent: this.spent.toFixed(6),
      state: 'active',
      entries: this.charges,
      per_stage: {},
    };
  }

  costUpdate(amount: number): void {
    this.spent += amount;
    this.charges += 1;
    this.emit('cost_update', this.ledger() as unknown as Record<string, unknown>);
  }

  snapshot(): SessionSnapshot {
    return {
      id: this.id,
      phase: this.phase,
      intent: null,
      ideas: JSON.parse(JSON.stringify(this.ideas)) as Idea[],
      selected_index: this.selectedIndex,
      coding_session:
        this.phase === 'configured' || this.phase === 'thinking' || this.phase === 'idea_ready'
          ? null
          : {
              workdir: 'experiments',
              run_index: 1,
              max_runs: 3,
              status: 'success',
              transcript: [
                { role: 'harness', text: 'initial experiment prompt' },
                { role: 'agent', text: 'ALL_COMPLETED' },
              ],
              successful_runs: [1],
              command_log: [['python', 'experiment.py', '--out_dir=run_1']],
            },
      artifacts: {},
      warnings: [...this.warnings],
      tables: JSON.parse(JSON.stringify(this.tables)) as Record<string, StageTable>,
      event_seq: this.events.length,
      ledger: this.ledger(),
    } as SessionSnapshot & { system_prompt?: string };
  }

  refreshIdeaTable(): void {
    const previous = this.tables['ideas'];
    this.tables['ideas'] = ideaTable(
      this.ideas,
      previous ? previous.version : 0,
      previous ? previous.journal : [],
    );
    this.emit('table_update', {
      name: 'ideas',
      table: this.tables['ideas'] as unknown as Record<string, unknown>,
    });
  }

  runThinkStage(): void {
    this.transition('thinking');
    this.ideas = [makeIdea('Idea 1'), makeIdea('Idea 2'), makeIdea('Idea 3')];
    this.selectedIndex = 1;
    this.refreshIdeaTable();
    this.costUpdate(0.01);
    this.transition('idea_ready');
  }

  runFeedback(): void {
    this.transition('thinking');
    const parent = this.selectedIndex ?? 0;
    this.ideas.push(makeIdea(`${this.ideas[parent].title} (refined)`, parent));
    this.selectedIndex = this.ideas.length - 1;
    this.refreshIdeaTable();
    this.costUpdate(0.002);
    this.transition('idea_ready');
  }

  runCodeStage(): void {
    this.transition('coding');
    this.tables['experiment'] = {
      columns: [
        ['component', 'Component'],
        ['values', 'Values'],
      ],
      rows: [
        { component: 'model', values: ['ResNet18'] },
        { component: 'dataset', values: ['MNIST'] },
        { component: 'metric', values: ['accuracy'] },
      ],
      provenance: 'coder',
      version: 0,
      journal: [],
    };
    this.emit('table_update', {
      name: 'experiment',
      table: this.tables['experiment'] as unknown as Record<string, unknown>,
    });
    this.costUpdate(0.005);
    this.transition('code_ready');
  }

  runWriteStage(): void {
    this.transition('writing');
    this.costUpdate(0.02);
    this.transition('paper_ready');
  }

  runReviewStage(): void {
    this.transition('reviewing');
    this.costUpdate(0.008);
    this.transition('done');
  }
}

// --- HTTP routing ----------------------------------------------------------------------

const PAPER_TEX = [
  '\\documentclass{article}',
  '% ai-disclosure-footer',
  '\\begin{document}',
  'Generated by an automated research pipeline --- AI involvement disclosed',
  '\\end{document}',
].join('\n');

const META_REVIEW = {
  summary: 'Aggregated view of three persona reviews.',
  strengths: ['clear method'],
  weaknesses: ['small scale'],
  questions: ['scaling behavior?'],
  limitations: ['single GPU'],
  ratings: {
    originality: 3,
    quality: 3,
    clarity: 3,
    significance: 2,
    soundness: 3,
    presentation: 3,
    contribution: 2,
  },
  overall: 6,
  confidence: 4,
  ethical_concerns: false,
  decision: 'Accept',
  source_review_count: 3,
};

export class FakeServer {
  sessions = new Map<string, FakeSession>();
  private counter = 0;

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = (init?.method ?? 'GET').toUpperCase();
    const body = init?.body ? (JSON.parse(init.body as string) as Record<string, unknown>) : {};
    const parsed = new URL(url, 'http://fake');
    const path = parsed.pathname;

    if (method === 'POST' && path === '/sessions') {
      this.counter += 1;
      const id = `s${String(this.counter).padStart(4, '0')}`;
      this.sessions.set(id, new FakeSession(id, String(body['budget'] ?? '10.0')));
      return json({ id, phase: 'configured' }, 201);
    }

    const match = path.match(/^\/sessions\/([^/]+)(\/.*)?$/);
    if (!match) return json({ detail: 'not found' }, 404);
    const session = this.sessions.get(match[1]);
    if (!session) return json({ detail: 'unknown session' }, 404);
    const rest = match[2] ?? '';

    if (method === 'GET' && rest === '') {
      return json({ ...session.snapshot(), system_prompt: 'You are an ambitious AI PhD student.' });
    }
    if (method === 'POST' && rest === '/intent') {
      if (session.phase !== 'configured') return json({ detail: 'intent already submitted' }, 409);
      if (!String(body['text'] ?? '').trim()) return json({ detail: 'text must be non-empty' }, 422);
      queueMicrotask(() => session.runThinkStage());
      return json(session.snapshot(), 202);
    }
    if (method === 'GET' && rest === '/ideas') {
      const table = session.tables['ideas'];
      return table ? json(table) : json({ detail: 'ideas are not ready' }, 409);
    }
    if (method === 'POST' && rest === '/feedback') {
      if (session.phase !== 'idea_ready') return json({ detail: 'illegal transition' }, 409);
      queueMicrotask(() => session.runFeedback());
      return json(session.snapshot(), 202);
    }
    if (method === 'POST' && rest === '/confirm') {
      if (session.phase !== 'idea_ready') return json({ detail: 'illegal transition' }, 409);
      const index = body['index'];
      if (typeof index === 'number') session.selectedIndex = index;
      queueMicrotask(() => session.runCodeStage());
      return json(session.snapshot(), 202);
    }
    if (method === 'POST' && rest === '/write') {
      if (session.phase !== 'code_ready') return json({ detail: 'illegal transition' }, 409);
      queueMicrotask(() => session.runWriteStage());
      return json(session.snapshot(), 202);
    }
    if (method === 'POST' && rest === '/review') {
      if (session.phase !== 'paper_ready') return json({ detail: 'illegal transition' }, 409);
      queueMicrotask(() => session.runReviewStage());
      return json(session.snapshot(), 202);
    }
    if (method === 'GET' && rest === '/paper') {
      if (!['paper_ready', 'reviewing', 'done'].includes(session.phase)) {
        return json({ detail: 'no paper yet' }, 409);
      }
      return new Response(PAPER_TEX, {
        status: 200,
        headers: { 'content-type': 'text/plain' },
      });
    }
    if (method === 'GET' && rest === '/review') {
      if (session.phase !== 'done') return json({ detail: 'no review yet' }, 409);
      return json(META_REVIEW);
    }
    if (method === 'GET' && rest === '/artifacts') {
      const zip = buildZip({
        'run_1/final_info.json': JSON.stringify({ accuracy: 1.0 }),
        'experiment.py': 'print("experiment")',
        'notes.txt': '[DATE] run 1: results {"accuracy": 1.0}',
      });
      const bytes = new Uint8Array(zip);
      return new Response(bytes.buffer.slice(0, bytes.length), {
        status: 200,
        headers: { 'content-type': 'application/zip' },
      });
    }
    const tableMatch = rest.match(/^\/tables\/([^/]+)$/);
    if (method === 'PATCH' && tableMatch) {
      const table = session.tables[tableMatch[1]];
      if (!table) return json({ detail: 'no such table' }, 422);
      const version = body['version'] as number;
      if (version !== table.version) {
        return json({ detail: `stale table version ${version}; current is ${table.version}` }, 409);
      }
      const edit = body['edit'] as { row: number; column: string; new_value: unknown };
      if (edit.row < 0 || edit.row >= table.rows.length) {
        return json({ detail: 'row out of range' }, 422);
      }
      table.rows[edit.row] = { ...table.rows[edit.row], [edit.column]: edit.new_value };
      table.version += 1;
      table.journal = [...table.journal, { version: table.version, edit }];
      if (tableMatch[1] === 'ideas' && edit.column === 'title') {
        session.ideas[edit.row].title = String(edit.new_value);
      }
      session.emit('table_update', {
        name: tableMatch[1],
        table: table as unknown as Record<string, unknown>,
      });
      return json(table);
    }
    if (method === 'GET' && rest === '/events') {
      const cursor = Number(parsed.searchParams.get('cursor') ?? '0');
      return sseResponse(session, cursor);
    }
    return json({ detail: 'not found' }, 404);
  };
}

function json(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(data), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

function sseResponse(session: FakeSession, cursor: number): Response {
  const encoder = new TextEncoder();
  let delivered = cursor;
  const stream = new ReadableStream<Uint8Array>({
    async pull(controller) {
      for (;;) {
        const next = session.events.find((event) => event.seq > delivered);
        if (next) {
          delivered = next.seq;
          controller.enqueue(
            encoder.encode(`id: ${next.seq}\ndata: ${JSON.stringify(next)}\n\n`),
          );
          return;
        }
        if (ABSORBING.includes(session.phase)) {
          controller.close();
          return;
        }
        await session.waitForEvent();
      }
    },
  });
  return new Response(stream, {
    status: 200,
    headers: { 'content-type': 'text/event-stream' },
  });
}
