// Whole-app flow against an intercepted network: score a fixture image,
// follow the call to action into the report form, file the report, and
// find it in the admin table. The stub keeps server-side state so the
// admin view shows exactly what the form submitted.

import { afterEach, beforeEach, describe, expect, it } from 'vitest';

import { ReportDraft, ReportRecord } from '../src/api.js';
import { boot } from '../src/app.js';
import { flush, schemaRoute, stubNetwork } from './stubnet.js';

const BASE = 'http://api.test';

const PREDICTION = {
  sample_id: 'd'.repeat(64),
  score: 0.94,
  decision: 'wssv',
  model_id: 'cnn-v2@0f3a9c11',
  latency_ms: 18.3,
  input_provenance: 'pond7.png',
  saliency: {
    baseline_score: 0.94,
    side: 32,
    overlay_png: 'data:image/png;base64,U0FMSUVOQ1k=',
  },
};

function statefulApi() {
  const filed: ReportRecord[] = [];
  const net = stubNetwork([
    schemaRoute,
    { method: 'POST', path: '/api/v1/predict', reply: () => PREDICTION },
    {
      method: 'POST',
      path: '/api/v1/reports',
      reply: (call) => {
        const draft = call.json as ReportDraft;
        const record: ReportRecord = {
          id: `r${(filed.length + 1).toString().padStart(15, '0')}`,
          created_at: '2026-04-02T09:30:00+00:00',
          location: draft.location,
          images: draft.images,
          water: draft.water ?? {},
          environment: draft.environment ?? {},
          notes: draft.notes ?? null,
          submitter: draft.submitter,
        };
        filed.push(record);
        return { status: 201, body: record };
      },
    },
    { method: 'GET', path: '/api/v1/reports', reply: () => ({ reports: [...filed].reverse() }) },
    { method: 'GET', path: '/api/v1/dataset/samples', reply: () => ({ samples: [] }) },
    { method: 'GET', path: '/api/v1/models', reply: () => ({ models: [], active: null }) },
  ]);
  return { net, filed };
}

function q<T extends Element>(sel: string): T {
  const el = document.querySelector(sel);
  if (!el) throw new Error('missing element: ' + sel);
  return el as T;
}

const realFetch = globalThis.fetch;

beforeEach(() => {
  document.body.innerHTML = '<div id="app"></div>';
});

afterEach(() => {
  globalThis.fetch = realFetch;
});

describe('field-to-admin flow', () => {
  it('files a flagged image and finds the report in the admin table', async () => {
    const { net, filed } = statefulApi();
    await bootApp(net.fetchFn);

    // 1. score a fixture photo
    const photo = q<HTMLInputElement>('[data-testid="photo-input"]');
    const file = new File([new Uint8Array([1, 2, 3])], 'pond7.png', { type: 'image/png' });
    Object.defineProperty(photo, 'files', { value: [file], configurable: true });
    photo.dispatchEvent(new Event('change'));
    await flush();

    expect(q('[data-testid="score"]').textContent).toBe('0.94');
    expect(q('[data-testid="decision-badge"]').textContent).toBe('WSSV suspected');
    expect(q<HTMLImageElement>('[data-testid="overlay"]').src).toBe(
      PREDICTION.saliency.overlay_png,
    );

    // 2. follow the call to action into the report form
    q<HTMLButtonElement>('[data-testid="file-report-cta"]').click();
    const reportPane = q<HTMLElement>('[data-pane="report"]');
    expect(reportPane.classList.contains('hidden')).toBe(false);
    expect(q('[data-testid="attached-images"]').textContent).toContain('dddddddddddd');

    // 3. fill and submit
    fill('in-submitter', 'tech_rios');
    fill('in-latitude', '-6.9');
    fill('in-longitude', '110.4');
    q<HTMLFormElement>('[data-testid="report-form"]').dispatchEvent(
      new Event('submit', { cancelable: true }),
    );
    await flush();

    expect(filed).toHaveLength(1);
    expect(filed[0].images[0].sample_id).toBe(PREDICTION.sample_id);
    expect(q('[data-testid="report-confirm"]').textContent).toBe(
      `Report filed: ${filed[0].id}`,
    );

    // 4. the admin table lists what the server holds
    q<HTMLButtonElement>('button[data-tab="admin"]').click();
    await flush();

    const row = q<HTMLElement>(`[data-report-id="${filed[0].id}"]`);
    expect(row.textContent).toContain('tech_rios');
    expect(row.textContent).toContain('-6.9');
    expect(row.textContent).toContain('110.4');
    expect(row.textContent).toContain('wssv');
  });

  it('keeps panes hidden until their tab is picked', async () => {
    const { net } = statefulApi();
    await bootApp(net.fetchFn);
    expect(q('[data-pane="predict"]').classList.contains('hidden')).toBe(false);
    expect(q('[data-pane="report"]').classList.contains('hidden')).toBe(true);
    expect(q('[data-pane="admin"]').classList.contains('hidden')).toBe(true);

    q<HTMLButtonElement>('button[data-tab="report"]').click();
    expect(q('[data-pane="report"]').classList.contains('hidden')).toBe(false);
    expect(q('[data-pane="predict"]').classList.contains('hidden')).toBe(true);
  });
});

// the stub stays installed for the whole test; afterEach restores fetch
async function bootApp(fetchFn: unknown) {
  globalThis.fetch = fetchFn as typeof fetch;
  await boot(document.getElementById('app')!, BASE);
}

function fill(testid: string, value: string) {
  const el = q<HTMLInputElement>(`[data-testid="${testid}"]`);
  el.value = value;
  el.dispatchEvent(new Event('input', { bubbles: true }));
}
