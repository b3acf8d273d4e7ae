/**
 * Pairwise preference study screen.
 *
 * Loads a query manifest, walks the reviewer through the randomized
 * queries (two questions each), keeps progress in localStorage so a
 * reload resumes mid-session, and exports the responses as CSV.
 */

import {
  Choice,
  parseManifest,
  PreferenceQuery,
  PreferenceSession,
  SessionState,
} from './preference';

const QUESTION_FIDELITY =
  'Task 1: choose the image that most aligns with the object/style of the reference.';
const QUESTION_TEXT =
  'Task 2: choose the image that most describes the prompt text.';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function imageCard(label: string, uri: string): HTMLElement {
  const fig = el('figure', 'study-image');
  if (/^https?:\/\//.test(uri) || uri.startsWith('data:')) {
    const img = el('img');
    img.src = uri;
    img.alt = label;
    fig.append(img);
  } else {
    fig.append(el('div', 'placeholder', uri || label));
  }
  fig.append(el('figcaption', undefined, label));
  return fig;
}

export function storageKeyFor(queries: PreferenceQuery[]): string {
  return 'gal-preference-session:' + queries.map((q) => q.query_id).join('|');
}

export class StudyScreen {
  private session: PreferenceSession | null = null;
  private queries: PreferenceQuery[] = [];
  private fidelity: Choice | null = null;
  private text: Choice | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly storage: Storage = window.localStorage,
    private readonly seedSource: () => number = () => (Date.now() & 0x7fffffff),
  ) {}

  /** Entry point: show the manifest picker, or resume a stored session. */
  start(): void {
    this.root.replaceChildren();
    const box = el('div', 'study-setup');
    box.append(el('h2', undefined, 'Preference study'));
    box.append(el('p', 'hint',
      'Load a query manifest (JSON with {queries: [...]}) to begin.'));
    const input = el('input') as HTMLInputElement;
    input.type = 'file';
    input.accept = 'application/json';
    input.addEventListener('change', () => {
      const file = input.files?.[0];
      if (!file) return;
      void file.text().then((text) => this.loadManifest(JSON.parse(text)));
    });
    box.append(input);
    this.root.append(box);
  }

  loadManifest(doc: unknown): void {
    this.queries = parseManifest(doc);
    const stored = this.storage.getItem(storageKeyFor(this.queries));
    if (stored !== null) {
      try {
        this.session = PreferenceSession.restore(
          this.queries, JSON.parse(stored) as SessionState);
      } catch {
        this.session = PreferenceSession.fresh(this.queries, this.seedSource());
      }
    } else {
      this.session = PreferenceSession.fresh(this.queries, this.seedSource());
    }
    this.persist();
    this.renderCurrent();
  }

  private persist(): void {
    if (this.session === null) return;
    this.storage.setItem(storageKeyFor(this.queries),
                         JSON.stringify(this.session.serialize()));
  }

  private renderCurrent(): void {
    const session = this.session!;
    this.fidelity = null;
    this.text = null;
    this.root.replaceChildren();

    if (session.done) {
      this.renderFinished();
      return;
    }
    const presented = session.current()!;
    const wrap = el('div', 'study-query');
    wrap.append(el('div', 'progress',
      `Query ${presented.index + 1} of ${presented.total} (session seed ${session.seed})`));

    if (presented.query.reference_images.length > 0) {
      const refRow = el('div', 'study-references');
      for (const uri of presented.query.reference_images) {
        refRow.append(imageCard('reference', uri));
      }
      wrap.append(refRow);
    }
    wrap.append(el('p', 'study-prompt', `Prompt: ${presented.query.prompt}`));

    const pair = el('div', 'study-pair');
    pair.append(imageCard('Image A', presented.first.uri));
    pair.append(imageCard('Image B', presented.second.uri));
    wrap.append(pair);

    wrap.append(this.questionBlock('fidelity', QUESTION_FIDELITY,
                                   (c) => { this.fidelity = c; }));
    wrap.append(this.questionBlock('text', QUESTION_TEXT,
                                   (c) => { this.text = c; }));

    const next = el('button', 'next', 'Record answers');
    next.type = 'button';
    next.addEventListener('click', () => {
      if (this.fidelity === null || this.text === null) {
        message.textContent = 'Answer both questions first.';
        return;
      }
      session.answer(this.fidelity, this.text);
      this.persist();
      this.renderCurrent();
    });
    const message = el('div', 'message');
    wrap.append(next, message);
    this.root.append(wrap);
  }

  private questionBlock(name: string, question: string,
                        onPick: (c: Choice) => void): HTMLElement {
    const block = el('fieldset', 'question');
    block.append(el('legend', undefined, question));
    for (const [value, label] of
         [['image_a', 'Image A'], ['equal', 'Equal'], ['image_b', 'Image B']] as const) {
      const lab = el('label', 'option');
      const radio = el('input') as HTMLInputElement;
      radio.type = 'radio';
      radio.name = name;
      radio.value = value;
      radio.addEventListener('change', () => onPick(value));
      lab.append(radio, document.createTextNode(' ' + label));
      block.append(lab);
    }
    return block;
  }

  private renderFinished(): void {
    const session = this.session!;
    const box = el('div', 'study-done');
    box.append(el('h2', undefined, 'Session complete'));
    box.append(el('p', undefined,
      `${session.answered} queries answered (${session.answered * 2} responses recorded).`));
    const download = el('button', 'download', 'Download responses CSV');
    download.type = 'button';
    download.addEventListener('click', () => {
      const blob = new Blob([session.toCSV()], { type: 'text/csv' });
      const link = el('a') as HTMLAnchorElement;
      link.href = URL.createObjectURL(blob);
      link.download = 'preference-responses.csv';
      link.click();
      URL.revokeObjectURL(link.href);
    });
    const reset = el('button', 'reset', 'Discard session');
    reset.type = 'button';
    reset.addEventListener('click', () => {
      this.storage.removeItem(storageKeyFor(this.queries));
      this.session = null;
      this.start();
    });
    box.append(download, reset);
    this.root.replaceChildren(box);
  }
}
