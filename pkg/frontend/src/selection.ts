/**
 * Client-side selection state for the candidate grid.
 *
 * Enforces what the server will revalidate anyway: at most one sample per
 * anchor, at most k anchors overall. Clicking a selected card deselects
 * it; clicking a sibling card moves the anchor's pick.
 */

import type { DecisionPair } from './api';

export type ToggleResult =
  | { changed: true; action: 'selected' | 'replaced' | 'deselected' }
  | { changed: false; reason: 'anchor-limit' };

export class SelectionState {
  private chosen = new Map<number, string>();

  constructor(public readonly k: number) {}

  toggle(anchorId: number, sampleId: string): ToggleResult {
    const current = this.chosen.get(anchorId);
    if (current === sampleId) {
      this.chosen.delete(anchorId);
      return { changed: true, action: 'deselected' };
    }
    if (current !== undefined) {
      this.chosen.set(anchorId, sampleId);
      return { changed: true, action: 'replaced' };
    }
    if (this.chosen.size >= this.k) {
      return { changed: false, reason: 'anchor-limit' };
    }
    this.chosen.set(anchorId, sampleId);
    return { changed: true, action: 'selected' };
  }

  selectedFor(anchorId: number): string | undefined {
    return this.chosen.get(anchorId);
  }

  get size(): number {
    return this.chosen.size;
  }

  get atLimit(): boolean {
    return this.chosen.size >= this.k;
  }

  pairs(): DecisionPair[] {
    return [...this.chosen.entries()]
      .sort(([a], [b]) => a - b)
      .map(([anchor_id, sample_id]) => ({ anchor_id, sample_id }));
  }

  clear(): void {
    this.chosen.clear();
  }
}
