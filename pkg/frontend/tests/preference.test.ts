import { describe, expect, it } from 'vitest';

import {
  CSV_HEADER,
  parseManifest,
  PreferenceQuery,
  PreferenceSession,
} from '../src/preference';

function manifest(n: number): PreferenceQuery[] {
  return parseManifest({
    queries: Array.from({ length: n }, (_, i) => ({
      query_id: `q${i}`,
      prompt: `prompt ${i}`,
      reference_images: ['ref.png'],
      image_a: { id: `ours-${i}`, uri: `a${i}.png` },
      image_b: { id: `base-${i}`, uri: `b${i}.png` },
    })),
  });
}

describe('PreferenceSession', () => {
  it('a 20-query manifest yields a 40-answer CSV with presentation order', () => {
    const session = PreferenceSession.fresh(manifest(20), 1234);
    while (!session.done) {
      session.answer('image_a', 'equal');
    }
    expect(session.answered).toBe(20);
    // two recorded answers per query
    const recorded = session.answers();
    expect(recorded.length * 2).toBe(40);
    const csv = session.toCSV().trimEnd().split('\n');
    expect(csv[0]).toBe(CSV_HEADER);
    expect(csv.length).toBe(21);
    for (const row of csv.slice(1)) {
      const cells = row.split(',');
      expect(cells).toHaveLength(6);
      expect(['ab', 'ba']).toContain(cells[5]);
    }
  });

  it('randomizes order and flips per session seed, reproducibly', () => {
    const a = PreferenceSession.fresh(manifest(20), 7);
    const b = PreferenceSession.fresh(manifest(20), 7);
    const c = PreferenceSession.fresh(manifest(20), 8);
    const sequence = (s: PreferenceSession) => {
      const ids: string[] = [];
      while (!s.done) {
        const cur = s.current()!;
        ids.push(`${cur.query.query_id}:${cur.presented_order}`);
        s.answer('equal', 'equal');
      }
      return ids;
    };
    const seqA = sequence(a);
    expect(seqA).toEqual(sequence(b));
    expect(seqA).not.toEqual(sequence(c));
    // both presentation orders actually occur
    expect(new Set(seqA.map((x) => x.split(':')[1])).size).toBe(2);
  });

  it('presented_order de-randomizes the responses', () => {
    const session = PreferenceSession.fresh(manifest(20), 99);
    const sawFirstCard: string[] = [];
    while (!session.done) {
      const cur = session.current()!;
      sawFirstCard.push(cur.first.id);
      session.answer('image_a', 'image_b');
    }
    for (const [i, answer] of session.answers().entries()) {
      const canonicalFirst =
        answer.presented_order === 'ab' ? answer.image_a_id : answer.image_b_id;
      expect(sawFirstCard[i]).toBe(canonicalFirst);
    }
  });

  it('equal on both questions is recorded verbatim', () => {
    const session = PreferenceSession.fresh(manifest(1), 5);
    const entry = session.answer('equal', 'equal');
    expect(entry.fidelity_choice).toBe('equal');
    expect(entry.text_choice).toBe('equal');
  });

  it('resumes mid-session from serialized state', () => {
    const queries = manifest(20);
    const session = PreferenceSession.fresh(queries, 31);
    for (let i = 0; i < 8; i++) session.answer('image_b', 'equal');
    const beforeReload = session.current()!.query.query_id;

    const restored = PreferenceSession.restore(queries, session.serialize());
    expect(restored.answered).toBe(8);
    expect(restored.current()!.query.query_id).toBe(beforeReload);
    while (!restored.done) restored.answer('image_a', 'image_a');
    expect(restored.answered).toBe(20);
    // the first 8 answers survived the reload
    expect(restored.answers().slice(0, 8).every(
      (a) => a.fidelity_choice === 'image_b')).toBe(true);
  });

  it('refuses to restore state from a different manifest', () => {
    const state = PreferenceSession.fresh(manifest(3), 1).serialize();
    expect(() => PreferenceSession.restore(manifest(4), state)).toThrow();
  });

  it('rejects malformed manifests', () => {
    expect(() => parseManifest({})).toThrow();
    expect(() => parseManifest({ queries: [{ query_id: 'q' }] })).toThrow();
    expect(() => parseManifest({
      queries: [
        { query_id: 'dup', prompt: 'p', image_a: { id: 'a' }, image_b: { id: 'b' } },
        { query_id: 'dup', prompt: 'p', image_a: { id: 'a' }, image_b: { id: 'b' } },
      ],
    })).toThrow();
  });
});
