/**
 * Pairwise preference study session.
 *
 * Query order and A/B placement are randomized by a per-session seed that
 * is stored with every response, so the presentation is fully
 * de-randomizable afterwards. The whole session state serializes to JSON,
 * which is what makes it survive a page reload.
 */

export interface PreferenceQuery {
  query_id: string;
  prompt: string;
  reference_images: string[];
  image_a: { id: string; uri: string };
  image_b: { id: string; uri: string };
}

export type Choice = 'image_a' | 'equal' | 'image_b';

/** One completed query: both questions answered, presentation recorded. */
export interface PreferenceAnswer {
  query_id: string;
  image_a_id: string;
  image_b_id: string;
  /** Which image most matches the reference object/style (as presented). */
  fidelity_choice: Choice;
  /** Which image most matches the prompt text (as presented). */
  text_choice: Choice;
  /** 'ab' if canonical A was shown first, 'ba' if the pair was flipped. */
  presented_order: 'ab' | 'ba';
}

export interface SessionState {
  seed: number;
  order: number[];
  flips: boolean[];
  cursor: number;
  answers: PreferenceAnswer[];
  query_ids: string[];
}

export interface PresentedQuery {
  query: PreferenceQuery;
  index: number;
  total: number;
  presented_order: 'ab' | 'ba';
  /** Images in display order (first card, second card). */
  first: { id: string; uri: string };
  second: { id: string; uri: string };
}

import { mulberry32, shuffledIndices } from './rng';

export const CSV_HEADER =
  'query_id,image_a_id,image_b_id,fidelity_choice,text_choice,presented_order';

function csvCell(value: string): string {
  return /[",\n]/.test(value) ? '"' + value.replace(/"/g, '""') + '"' : value;
}

export class PreferenceSession {
  private constructor(
    private readonly queries: PreferenceQuery[],
    private state: SessionState,
  ) {}

  static fresh(queries: PreferenceQuery[], seed: number): PreferenceSession {
    const rand = mulberry32(seed);
    const order = shuffledIndices(queries.length, rand);
    const flips = queries.map(() => rand() < 0.5);
    return new PreferenceSession(queries, {
      seed,
      order,
      flips,
      cursor: 0,
      answers: [],
      query_ids: queries.map((q) => q.query_id),
    });
  }

  /** Rebuild a session from serialized state; the manifest must match. */
  static restore(queries: PreferenceQuery[], state: SessionState): PreferenceSession {
    const ids = queries.map((q) => q.query_id);
    if (ids.length !== state.query_ids.length ||
        ids.some((id, i) => id !== state.query_ids[i])) {
      throw new Error('session state belongs to a different query manifest');
    }
    return new PreferenceSession(queries, state);
  }

  serialize(): SessionState {
    return JSON.parse(JSON.stringify(this.state)) as SessionState;
  }

  get seed(): number {
    return this.state.seed;
  }

  get total(): number {
    return this.queries.length;
  }

  get answered(): number {
    return this.state.answers.length;
  }

  get done(): boolean {
    return this.state.cursor >= this.queries.length;
  }

  /** The query to show now, in presentation order, or null when finished. */
  current(): PresentedQuery | null {
    if (this.done) return null;
    const queryIndex = this.state.order[this.state.cursor]!;
    const query = this.queries[queryIndex]!;
    const flipped = this.state.flips[queryIndex]!;
    return {
      query,
      index: this.state.cursor,
      total: this.queries.length,
      presented_order: flipped ? 'ba' : 'ab',
      first: flipped ? query.image_b : query.image_a,
      second: flipped ? query.image_a : query.image_b,
    };
  }

  /**
   * Record both answers for the current query and advance. Choices are in
   * presented terms: 'image_a' means the first displayed card.
   */
  answer(fidelity: Choice, text: Choice): PreferenceAnswer {
    const presented = this.current();
    if (presented === null) {
      throw new Error('session is already complete');
    }
    const entry: PreferenceAnswer = {
      query_id: presented.query.query_id,
      image_a_id: presented.query.image_a.id,
      image_b_id: presented.query.image_b.id,
      fidelity_choice: fidelity,
      text_choice: text,
      presented_order: presented.presented_order,
    };
    this.state.answers.push(entry);
    this.state.cursor += 1;
    return entry;
  }

  /** Responses collected so far (two recorded answers per completed query). */
  answers(): PreferenceAnswer[] {
    return [...this.state.answers];
  }

  toCSV(): string {
    const rows = this.state.answers.map((a) =>
      [a.query_id, a.image_a_id, a.image_b_id, a.fidelity_choice,
       a.text_choice, a.presented_order].map(csvCell).join(','));
    return [CSV_HEADER, ...rows].join('\n') + '\n';
  }
}

/** Parse and minimally validate a query manifest document. */
export function parseManifest(doc: unknown): PreferenceQuery[] {
  if (!doc || typeof doc !== 'object' || !Array.isArray((doc as { queries?: unknown }).queries)) {
    throw new Error('manifest must be {queries: [...]}');
  }
  const queries = (doc as { queries: unknown[] }).queries.map((raw, i) => {
    const q = raw as Partial<PreferenceQuery>;
    if (!q.query_id || !q.prompt || !q.image_a?.id || !q.image_b?.id) {
      throw new Error(`manifest query ${i} is missing required fields`);
    }
    return {
      query_id: String(q.query_id),
      prompt: String(q.prompt),
      reference_images: (q.reference_images ?? []).map(String),
      image_a: { id: String(q.image_a.id), uri: String(q.image_a.uri ?? '') },
      image_b: { id: String(q.image_b.id), uri: String(q.image_b.uri ?? '') },
    };
  });
  const ids = new Set(queries.map((q) => q.query_id));
  if (ids.size !== queries.length) {
    throw new Error('manifest query ids must be unique');
  }
  return queries;
}
