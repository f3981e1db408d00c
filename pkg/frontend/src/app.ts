// Application shell: routes the five pages off the session view, which is
// rebuilt purely from REST snapshots plus the event stream.

import { ApiClient, type FetchLike } from './api';
import { clear, el } from './dom';
import { EventStream } from './events';
import { applyEvent, viewFromSnapshot, type SessionView } from './state';
import type { SessionEvent } from './types';
import { renderConfigPage } from './pages/config';
import { renderIntentPage } from './pages/intent';
import { renderIdeasPage } from './pages/ideas';
import { renderCodePage } from './pages/code';
import { renderPaperPage } from './pages/paper';

export interface AppOptions {
  root: HTMLElement;
  api: ApiClient;
  fetchImpl?: FetchLike;
  retryDelayMs?: number;
}

export type PageName = 'config' | 'intent' | 'ideas' | 'code' | 'paper' | 'halted';

export function pageForView(view: SessionView | null): PageName {
  if (view === null) return 'config';
  switch (view.phase) {
    case 'configured':
      return 'intent';
    case 'thinking':
      return view.snapshot.ideas.length > 0 ? 'ideas' : 'intent';
    case 'idea_ready':
      return 'ideas';
    case 'coding':
    case 'awaiting_human':
    case 'code_ready':
    case 'writing':
      return 'code';
    case 'paper_ready':
    case 'reviewing':
    case 'done':
      return 'paper';
    case 'blocked':
    case 'terminated':
      return 'halted';
  }
}

export class App {
  view: SessionView | null = null;
  lastDownload: ArrayBuffer | null = null;
  renderCount = 0;
  private stream: EventStream | null = null;
  private streamDone: Promise<void> | null = null;

  constructor(private options: AppOptions) {}

  get api(): ApiClient {
    return this.options.api;
  }

  start(): void {
    this.render();
  }

  async openSession(sessionId: string): Promise<void> {
    const snapshot = await this.api.getSession(sessionId);
    this.view = viewFromSnapshot(snapshot, snapshot.event_seq);
    this.subscribe(sessionId, snapshot.event_seq);
    this.render();
  }

  /** Simulates a browser refresh: drop all local state and rebuild. */
  async refresh(): Promise<void> {
    if (this.view === null) return;
    const sessionId = this.view.sessionId;
    await this.closeStream();
    this.view = null;
    await this.openSession(sessionId);
  }

  async closeStream(): Promise<void> {
    this.stream?.close();
    await this.streamDone?.catch(() => undefined);
    this.stream = null;
    this.streamDone = null;
  }

  private subscribe(sessionId: string, cursor: number): void {
    this.stream?.close();
    const stream = new EventStream((c) => this.api.eventsUrl(sessionId, c), {
      fetchImpl: this.options.fetchImpl,
      cursor,
      retryDelayMs: this.options.retryDelayMs ?? 500,
      maxIdleReconnects: Number.MAX_SAFE_INTEGER,
    });
    stream.onEvent((event) => this.handleEvent(event));
    this.stream = stream;
    this.streamDone = stream.run();
  }

  private handleEvent(event: SessionEvent): void {
    if (this.view === null) return;
    this.view = applyEvent(this.view, event);
    if (event.kind === 'phase_change') {
      void this.refetchSnapshot();
    }
    this.render();
  }

  private async refetchSnapshot(): Promise<void> {
    if (this.view === null) return;
    const cursor = this.view.cursor;
    const snapshot = await this.api.getSession(this.view.sessionId);
    this.view = viewFromSnapshot(snapshot, cursor);
    this.render();
  }

  render(): void {
    this.renderCount += 1;
    const root = this.options.root;
    clear(root);
    root.append(this.header());
    const body = el('div', { id: 'page' });
    root.append(body);
    const page = pageForView(this.view);

    if (page === 'config') {
      renderConfigPage(body, {
        startSession: async (model, apiKey, budget) => {
          const { id } = await this.api.createSession({
            model,
            budget,
            api_key: apiKey || undefined,
          });
          await this.openSession(id);
        },
      });
      return;
    }

    const view = this.view as SessionView;
    if (page === 'intent') {
      renderIntentPage(body, view, {
        submitIntent: async (text, override) => {
          await this.api.submitIntent(view.sessionId, text, override ?? undefined);
        },
      });
    } else if (page === 'ideas') {
      renderIdeasPage(body, view, {
        submitFeedback: async (text) => {
          await this.api.submitFeedback(view.sessionId, text);
        },
        confirmIdea: async (index) => {
          await this.api.confirmIdea(view.sessionId, index);
        },
        patchTable: async (name, version, edit) => {
          await this.api.patchTable(view.sessionId, name, version, edit);
        },
      });
    } else if (page === 'code') {
      renderCodePage(body, view, {
        downloadArtifacts: async () => {
          const bytes = await this.api.downloadArtifacts(view.sessionId);
          this.lastDownload = bytes;
          return bytes;
        },
        startWrite: async () => {
          await this.api.startWrite(view.sessionId);
        },
        resumeCoding: async (instruction) => {
          await this.api.startCode(view.sessionId, instruction);
        },
      });
    } else if (page === 'paper') {
      renderPaperPage(body, view, {
        getPaper: () => this.api.getPaper(view.sessionId),
        startReview: async () => {
          await this.api.startReview(view.sessionId);
        },
        getReview: () => this.api.getReview(view.sessionId),
      });
    } else {
      body.append(
        el(
          'div',
          { id: 'halted-banner', class: 'banner' },
          `Session ${view.phase}.`,
        ),
        el('ul', { id: 'halted-warnings' }),
      );
      const list = body.querySelector('#halted-warnings') as HTMLElement;
      view.warnings.forEach((warning) => list.append(el('li', {}, warning)));
    }
  }

  private header(): HTMLElement {
    const view = this.view;
    const meter =
      view === null
        ? 'no session'
        : `spent ${view.budget.total_spent} of ${view.budget.total_budget} (${view.budget.state})`;
    return el(
      'header',
      {},
      el('span', { id: 'session-label' }, view === null ? 'labpilot' : `session ${view.sessionId}`),
      el('span', { id: 'phase-badge' }, view === null ? '' : view.phase),
      el('span', { id: 'budget-meter' }, meter),
    );
  }
}

export async function waitFor(
  condition: () => boolean,
  timeoutMs = 5000,
  stepMs = 10,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (condition()) return;
    await new Promise((resolve) => setTimeout(resolve, stepMs));
  }
  throw new Error('waitFor timed out');
}
