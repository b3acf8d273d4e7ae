// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from 'vitest';

import { StudyScreen, storageKeyFor } from '../src/study';
import { parseManifest } from '../src/preference';

const MANIFEST = {
  queries: Array.from({ length: 20 }, (_, i) => ({
    query_id: `q${i}`,
    prompt: `prompt ${i}`,
    reference_images: [],
    image_a: { id: `ours-${i}`, uri: '' },
    image_b: { id: `base-${i}`, uri: '' },
  })),
};

function answerCurrent(root: HTMLElement, choice: 'image_a' | 'equal' | 'image_b') {
  for (const name of ['fidelity', 'text']) {
    const radio = root.querySelector<HTMLInputElement>(
      `input[name="${name}"][value="${choice}"]`)!;
    radio.click();
  }
  root.querySelector<HTMLButtonElement>('button.next')!.click();
}

describe('StudyScreen', () => {
  beforeEach(() => {
    window.localStorage.clear();
    document.body.replaceChildren();
  });

  it('walks a 20-query session and survives a page reload', () => {
    const root = document.createElement('div');
    document.body.append(root);
    const screen = new StudyScreen(root, window.localStorage, () => 4242);
    screen.loadManifest(MANIFEST);

    for (let i = 0; i < 8; i++) answerCurrent(root, 'image_a');
    expect(root.querySelector('.progress')!.textContent).toContain('Query 9 of 20');

    // a reload is a fresh screen over the same storage
    const root2 = document.createElement('div');
    document.body.append(root2);
    const screen2 = new StudyScreen(root2, window.localStorage, () => 7);
    screen2.loadManifest(MANIFEST);
    expect(root2.querySelector('.progress')!.textContent).toContain('Query 9 of 20');
    // same seed as before the reload, not the fresh-seed fallback
    expect(root2.querySelector('.progress')!.textContent).toContain('seed 4242');

    for (let i = 0; i < 12; i++) answerCurrent(root2, 'equal');
    expect(root2.textContent).toContain('20 queries answered');
    expect(root2.textContent).toContain('40 responses recorded');
  });

  it('requires both questions before advancing', () => {
    const root = document.createElement('div');
    document.body.append(root);
    new StudyScreen(root, window.localStorage, () => 1).loadManifest(MANIFEST);
    root.querySelector<HTMLInputElement>(
      'input[name="fidelity"][value="image_b"]')!.click();
    root.querySelector<HTMLButtonElement>('button.next')!.click();
    expect(root.querySelector('.message')!.textContent).toContain('both questions');
    expect(root.querySelector('.progress')!.textContent).toContain('Query 1 of 20');
  });

  it('stores state under a manifest-derived key', () => {
    const queries = parseManifest(MANIFEST);
    const root = document.createElement('div');
    document.body.append(root);
    new StudyScreen(root, window.localStorage, () => 9).loadManifest(MANIFEST);
    expect(window.localStorage.getItem(storageKeyFor(queries))).not.toBeNull();
  });
});
