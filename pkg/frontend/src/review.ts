/**
 * Candidate review screen.
 *
 * Polls the run status, renders the paused round's candidate grid, and
 * submits the reviewer's picks. Oracle scores and overfit badges are
 * displayed but never pre-select anything; the choice stays human.
 */

import { ApiError, CandidatePayload, ReviewApi, RoundSummary, RunSummary } from './api';
import { SelectionState } from './selection';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Deterministic placeholder tint for non-fetchable (simulated) samples. */
function tintFor(sampleId: string): string {
  let h = 0;
  for (const ch of sampleId) h = (h * 31 + ch.charCodeAt(0)) >>> 0;
  return `hsl(${h % 360} 45% 72%)`;
}

function thumbnail(uri: string, sampleId: string): HTMLElement {
  if (/^https?:\/\//.test(uri)) {
    const img = el('img', 'card-image');
    img.src = uri;
    img.alt = sampleId;
    return img;
  }
  const tile = el('div', 'card-image placeholder');
  tile.style.background = tintFor(sampleId);
  tile.textContent = sampleId;
  return tile;
}

export function renderCandidateGrid(
  container: HTMLElement,
  payload: CandidatePayload,
  selection: SelectionState,
  onToggle: (anchorId: number, sampleId: string) => void,
): void {
  container.replaceChildren();

  const head = el('div', 'round-head');
  head.append(
    el('h2', undefined, `Round ${payload.round}: pick up to ${payload.k} directions`),
    el('p', 'hint',
       'One sample per direction. Scores are advisory; overfit samples are flagged, not blocked.'),
  );
  if (payload.references.length > 0) {
    const refs = el('p', 'hint', `References: ${payload.references.join(', ')}`);
    head.append(refs);
  }
  container.append(head);

  for (const group of payload.anchors) {
    if (group.candidates.length === 0) continue; // nothing to review here
    const section = el('section', 'anchor-group');
    section.dataset.anchorId = String(group.anchor_id);
    const header = el('header', 'anchor-header');
    header.append(
      el('span', 'anchor-prompt', group.prompt),
      el('span', 'anchor-stats',
         `overfit ${Math.round(group.beta * 100)}% · entropy ${group.entropy.toFixed(3)}`),
    );
    section.append(header);

    const row = el('div', 'card-row');
    for (const card of group.candidates) {
      const button = el('button', 'card');
      button.type = 'button';
      button.dataset.sampleId = card.sample_id;
      if (selection.selectedFor(group.anchor_id) === card.sample_id) {
        button.classList.add('selected');
      }
      button.append(thumbnail(card.image_uri, card.sample_id));
      const meta = el('div', 'card-meta');
      meta.append(
        el('span', undefined, `anchor ${card.sim_to_anchor.toFixed(3)}`),
        el('span', undefined, `non-SoI ${card.sim_to_non_soi.toFixed(3)}`),
      );
      if (card.overfit) meta.append(el('span', 'badge-overfit', 'overfit'));
      button.append(meta);
      button.addEventListener('click', () => onToggle(group.anchor_id, card.sample_id));
      row.append(button);
    }
    section.append(row);
    container.append(section);
  }
}

export function renderRoundSummary(container: HTMLElement, summary: RoundSummary): void {
  container.replaceChildren();
  const box = el('div', 'summary');
  box.append(el('h2', undefined, `Round ${summary.round} accepted`));
  box.append(el('p', 'delta-line',
                `Openness delta: ${summary.delta.toPrecision(6)}`));
  if (summary.admitted.length === 0) {
    box.append(el('p', undefined, 'No references admitted this round.'));
  } else {
    const list = el('ul', 'admitted-list');
    for (const item of summary.admitted) {
      list.append(el('li', undefined,
        `direction ${item.anchor_id} · ${item.sample_id} · weight ` +
        `${item.weight === null ? 'n/a' : item.weight.toPrecision(6)}`));
    }
    box.append(list);
  }
  if (summary.stopped) {
    box.append(el('p', 'stopped-line', `Run stopped (${summary.stop_reason}).`));
  }
  container.append(box);
}

type Phase = 'loading' | 'waiting' | 'reviewing' | 'submitted' | 'stopped' | 'error';

export class ReviewScreen {
  private phase: Phase = 'loading';
  private selection: SelectionState | null = null;
  private shownRound = -1;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private grid: HTMLElement;
  private statusLine: HTMLElement;
  private controls: HTMLElement;
  private message: HTMLElement;
  private stopped = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
    private readonly pollMs = 500,
  ) {
    this.statusLine = el('div', 'status-line', 'Connecting…');
    this.message = el('div', 'message');
    this.grid = el('div', 'grid');
    this.controls = el('div', 'controls');
    root.replaceChildren(this.statusLine, this.message, this.grid, this.controls);
  }

  start(): void {
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }

  private schedule(): void {
    if (this.stopped) return;
    this.timer = setTimeout(() => void this.tick(), this.pollMs);
  }

  private async tick(): Promise<void> {
    let run: RunSummary;
    try {
      run = await this.api.getRun();
    } catch (err) {
      this.statusLine.textContent = `Engine unreachable: ${String(err)}`;
      this.schedule();
      return;
    }
    if (run.driver_error) {
      this.statusLine.textContent = `Engine error: ${run.driver_error}`;
      this.schedule();
      return;
    }
    if (run.status === 'stopped') {
      this.statusLine.textContent =
        `Run stopped after ${run.rounds_completed} rounds (${run.stop_reason}).`;
      if (this.phase !== 'submitted') this.grid.replaceChildren();
      this.controls.replaceChildren();
      this.phase = 'stopped';
      return; // terminal; no more polling
    }
    if (run.status === 'running') {
      if (this.phase !== 'submitted') {
        this.phase = 'waiting';
        this.statusLine.textContent =
          `Round ${run.current_round + 1} in progress, waiting for candidates…`;
        this.grid.replaceChildren();
        this.controls.replaceChildren();
      }
      this.schedule();
      return;
    }
    // awaiting_human; a freshly submitted summary stays up until the
    // reviewer moves on
    if (this.phase === 'submitted') {
      this.offerNextRound();
    } else if (this.phase !== 'reviewing' || this.shownRound !== run.current_round) {
      await this.loadRound();
    }
    this.schedule();
  }

  private offerNextRound(): void {
    if (this.controls.querySelector('button.continue')) return;
    this.controls.replaceChildren();
    const cont = el('button', 'continue', 'Review next round');
    cont.type = 'button';
    cont.addEventListener('click', () => {
      this.phase = 'loading';
      this.shownRound = -1;
      this.controls.replaceChildren();
    });
    this.controls.append(cont);
  }

  private async loadRound(): Promise<void> {
    let payload: CandidatePayload;
    try {
      payload = await this.api.getCandidates();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.statusLine.textContent = 'No round awaiting review.';
        return;
      }
      throw err;
    }
    this.phase = 'reviewing';
    this.shownRound = payload.round;
    this.selection = new SelectionState(payload.k);
    this.message.textContent = '';
    this.statusLine.textContent = `Round ${payload.round} awaiting review.`;
    this.renderGrid(payload);
  }

  private renderGrid(payload: CandidatePayload): void {
    const selection = this.selection!;
    renderCandidateGrid(this.grid, payload, selection, (anchorId, sampleId) => {
      const result = selection.toggle(anchorId, sampleId);
      if (!result.changed) {
        this.message.textContent =
          `At most ${payload.k} directions per round; deselect one first.`;
        return;
      }
      this.message.textContent = '';
      this.renderGrid(payload);
    });
    this.renderControls(payload);
  }

  private renderControls(payload: CandidatePayload): void {
    const selection = this.selection!;
    this.controls.replaceChildren();
    const count = el('span', 'count',
                     `${selection.size}/${payload.k} directions selected`);
    const submit = el('button', 'submit', 'Submit selection');
    submit.type = 'button';
    submit.addEventListener('click', () => void this.submit(selection.pairs()));
    const skip = el('button', 'skip', 'Skip round (admit nothing)');
    skip.type = 'button';
    skip.addEventListener('click', () => void this.submit([]));
    this.controls.append(count, submit, skip);
  }

  private async submit(pairs: { anchor_id: number; sample_id: string }[]): Promise<void> {
    let summary: RoundSummary;
    try {
      summary = await this.api.postDecision(pairs);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.message.textContent = 'This round is stale; reloading candidates.';
        this.shownRound = -1;
        return;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.message.textContent = `Rejected: ${err.message}`;
        return;
      }
      this.message.textContent = `Submit failed: ${String(err)}`;
      return;
    }
    this.phase = 'submitted';
    this.statusLine.textContent = 'Decision accepted.';
    this.controls.replaceChildren();
    renderRoundSummary(this.grid, summary);
  }
}
