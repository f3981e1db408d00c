// Thin REST client over fetch. The fetch implementation is injectable so
// tests can run against an in-memory server double.

import type { Review, SessionSnapshot, StageTable, TableEdit } from './types';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface SessionCreateOptions {
  model: string;
  budget: string;
  api_key?: string; // held by the server in memory only, never persisted
  num_ideas?: number;
  reflections?: number;
  script?: string[];
  corpus?: unknown[];
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body !== undefined ? { 'Content-Type': 'application/json' } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    const contentType = response.headers.get('content-type') ?? '';
    if (contentType.includes('application/json')) {
      return (await response.json()) as T;
    }
    return (await response.text()) as unknown as T;
  }

  createSession(options: SessionCreateOptions): Promise<{ id: string }> {
    return this.request('POST', '/sessions', options);
  }

  getSession(id: string): Promise<SessionSnapshot> {
    return this.request('GET', `/sessions/${id}`);
  }

  submitIntent(id: string, text: string, systemPromptOverride?: string): Promise<unknown> {
    return this.request('POST', `/sessions/${id}/intent`, {
      text,
      system_prompt_override: systemPromptOverride ?? null,
    });
  }

  getIdeasTable(id: string): Promise<StageTable> {
    return this.request('GET', `/sessions/${id}/ideas`);
  }

  submitFeedback(id: string, text: string): Promise<unknown> {
    return this.request('POST', `/sessions/${id}/feedback`, { text });
  }

  confirmIdea(id: string, index?: number): Promise<unknown> {
    return this.request('POST', `/sessions/${id}/confirm`, { index: index ?? null });
  }

  startCode(id: string, instruction = ''): Promise<unknown> {
    return this.request('POST', `/sessions/${id}/code`, { instruction });
  }

  startWrite(id: string): Promise<unknown> {
    return this.request('POST', `/sessions/${id}/write`);
  }

  startReview(id: string): Promise<unknown> {
    return this.request('POST', `/sessions/${id}/review`);
  }

  getReview(id: string): Promise<Review> {
    return this.request('GET', `/sessions/${id}/review`);
  }

  async getPaper(id: string): Promise<{ contentType: string; body: string }> {
    const response = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/paper`);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return {
      contentType: response.headers.get('content-type') ?? 'text/plain',
      body: await response.text(),
    };
  }

  async downloadArtifacts(id: string): Promise<ArrayBuffer> {
    const response = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/artifacts`);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return response.arrayBuffer();
  }

  patchTable(id: string, name: string, version: number, edit: TableEdit): Promise<StageTable> {
    return this.request('PATCH', `/sessions/${id}/tables/${name}`, { version, edit });
  }

  eventsUrl(id: string, cursor: number): string {
    return `${this.baseUrl}/sessions/${id}/events?cursor=${cursor}`;
  }
}
