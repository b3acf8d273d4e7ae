/**
 * Typed client for the engine's review endpoint.
 *
 * All mutations go through POST /api/round/current/decision; the server
 * answers 409 when no round is paused (stale round) and 422 when the
 * decision itself is invalid.
 */

export interface RunSummary {
  status: 'running' | 'awaiting_human' | 'stopped';
  stop_reason: string | null;
  rounds_completed: number;
  current_round: number;
  strategy: string;
  balance_enabled: boolean;
  k: number;
  m: number;
  anchor_count: number;
  max_rounds: number;
  last_delta: number | null;
  training_set_size: number;
  driver_error?: string | null;
}

export interface CandidateCard {
  sample_id: string;
  image_uri: string;
  sim_to_anchor: number;
  sim_to_non_soi: number;
  overfit: boolean;
}

export interface AnchorGroup {
  anchor_id: number;
  prompt: string;
  beta: number;
  entropy: number;
  candidates: CandidateCard[];
}

export interface CandidatePayload {
  round: number;
  k: number;
  references: string[];
  anchors: AnchorGroup[];
}

export interface DecisionPair {
  anchor_id: number;
  sample_id: string;
}

export interface AdmittedReference {
  anchor_id: number;
  sample_id: string;
  weight: number | null;
}

export interface RoundSummary {
  round: number;
  delta: number;
  stopped: boolean;
  stop_reason: string | null;
  admitted: AdmittedReference[];
  metrics: { txt_aln: number; img_aln: number; ovf: number } | null;
}

export interface ReferenceRow {
  image_ref: string;
  caption: string;
  weight: number;
  origin: 'original' | 'synthetic';
  round_added: number;
}

export class ApiError extends Error {
  constructor(public readonly status: number, message: string) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const body = await resp.text();
    if (!resp.ok) {
      let detail = body;
      try {
        detail = JSON.parse(body).detail ?? body;
      } catch {
        /* plain-text error body */
      }
      throw new ApiError(resp.status, String(detail));
    }
    return JSON.parse(body) as T;
  }

  getRun(): Promise<RunSummary> {
    return this.request<RunSummary>('/api/run');
  }

  getCandidates(): Promise<CandidatePayload> {
    return this.request<CandidatePayload>('/api/round/current/candidates');
  }

  postDecision(pairs: DecisionPair[]): Promise<RoundSummary> {
    return this.request<RoundSummary>('/api/round/current/decision', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ pairs }),
    });
  }

  async getReferences(): Promise<ReferenceRow[]> {
    const body = await this.request<{ references: ReferenceRow[] }>('/api/references');
    return body.references;
  }
}
