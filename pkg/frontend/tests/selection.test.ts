import { describe, expect, it } from 'vitest';

import { SelectionState } from '../src/selection';

describe('SelectionState', () => {
  it('selects up to k anchors and then blocks', () => {
    const sel = new SelectionState(3);
    expect(sel.toggle(0, 's0')).toEqual({ changed: true, action: 'selected' });
    expect(sel.toggle(1, 's1')).toEqual({ changed: true, action: 'selected' });
    expect(sel.toggle(2, 's2')).toEqual({ changed: true, action: 'selected' });
    expect(sel.toggle(3, 's3')).toEqual({ changed: false, reason: 'anchor-limit' });
    expect(sel.size).toBe(3);
    expect(sel.atLimit).toBe(true);
  });

  it('keeps at most one sample per anchor by replacing', () => {
    const sel = new SelectionState(3);
    sel.toggle(0, 's0');
    expect(sel.toggle(0, 's1')).toEqual({ changed: true, action: 'replaced' });
    expect(sel.selectedFor(0)).toBe('s1');
    expect(sel.size).toBe(1);
  });

  it('deselects on a second click of the same card', () => {
    const sel = new SelectionState(2);
    sel.toggle(5, 'x');
    expect(sel.toggle(5, 'x')).toEqual({ changed: true, action: 'deselected' });
    expect(sel.size).toBe(0);
  });

  it('replacing at the limit is still allowed', () => {
    const sel = new SelectionState(1);
    sel.toggle(0, 'a');
    expect(sel.toggle(0, 'b').changed).toBe(true);
    expect(sel.toggle(1, 'c').changed).toBe(false);
  });

  it('emits pairs sorted by anchor id', () => {
    const sel = new SelectionState(3);
    sel.toggle(7, 'g');
    sel.toggle(2, 'b');
    sel.toggle(4, 'd');
    expect(sel.pairs()).toEqual([
      { anchor_id: 2, sample_id: 'b' },
      { anchor_id: 4, sample_id: 'd' },
      { anchor_id: 7, sample_id: 'g' },
    ]);
  });
});
