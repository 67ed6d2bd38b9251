import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient, ReportDraft, ReportRecord } from '../src/api.js';
import { ClientSession } from '../src/session.js';
import { renderReportForm } from '../src/views/report.js';
import { Route, flush, schemaRoute, stubNetwork } from './stubnet.js';

const BASE = 'http://api.test';

const FLAGGED = {
  sample_id: 'b'.repeat(64),
  prediction: { score: 0.91, decision: 'wssv' },
};

function acceptedRecord(draft: ReportDraft, id = 'feedbeef12345678'): ReportRecord {
  return {
    id,
    created_at: '2026-04-02T08:00:00+00:00',
    location: draft.location,
    images: draft.images,
    water: draft.water ?? {},
    environment: draft.environment ?? {},
    notes: draft.notes ?? null,
    submitter: draft.submitter,
  };
}

async function setup(routes: Route[]) {
  const net = stubNetwork([schemaRoute, ...routes]);
  const session = new ClientSession(new ApiClient(BASE, net.fetchFn));
  await session.init();
  const root = document.createElement('div');
  document.body.appendChild(root);
  const form = renderReportForm(root, session);
  return { net, session, root, form };
}

function input(root: HTMLElement, name: string): HTMLInputElement {
  return root.querySelector(`[data-testid="in-${name}"]`) as HTMLInputElement;
}

function type(root: HTMLElement, name: string, value: string) {
  const el = input(root, name);
  el.value = value;
  el.dispatchEvent(new Event('input', { bubbles: true }));
}

function errorText(root: HTMLElement, name: string): string {
  return (root.querySelector(`[data-testid="err-${name}"]`) as HTMLElement).textContent ?? '';
}

function submitButton(root: HTMLElement): HTMLButtonElement {
  return root.querySelector('[data-testid="submit-report"]') as HTMLButtonElement;
}

function submitForm(root: HTMLElement) {
  (root.querySelector('[data-testid="report-form"]') as HTMLFormElement).dispatchEvent(
    new Event('submit', { cancelable: true }),
  );
}

beforeEach(() => {
  document.body.innerHTML = '';
  // tests opt into a fake geolocation explicitly
  Object.defineProperty(navigator, 'geolocation', { value: undefined, configurable: true });
});

describe('report form validation', () => {
  it('blocks latitude 91 inline, before any network call', async () => {
    const { net, root, form } = await setup([]);
    form.attach(FLAGGED);
    type(root, 'submitter', 'tech');
    type(root, 'latitude', '91');
    type(root, 'longitude', '0');

    expect(errorText(root, 'latitude')).toBe('latitude 91 above maximum 90');
    expect(submitButton(root).disabled).toBe(true);

    submitForm(root);
    await flush();
    expect(net.callsTo('/api/v1/reports')).toHaveLength(0);
  });

  it('applies the served water ranges, not local constants', async () => {
    const { root, form } = await setup([]);
    form.attach(FLAGGED);
    type(root, 'ph', '15');
    expect(errorText(root, 'ph')).toBe('ph 15 above maximum 14');
    type(root, 'salinity', '-1');
    expect(errorText(root, 'salinity')).toBe('salinity -1 below minimum 0');
    // temperature has no served bounds, so any number is fine
    type(root, 'temperature', '-40');
    expect(errorText(root, 'temperature')).toBe('');
  });

  it('requires an attached flagged image before enabling submit', async () => {
    const { root } = await setup([]);
    type(root, 'submitter', 'tech');
    type(root, 'latitude', '10');
    type(root, 'longitude', '10');
    expect(submitButton(root).disabled).toBe(true);
  });
});

describe('report submission', () => {
  it('posts a manual-entry draft and shows the acknowledged id', async () => {
    let posted: ReportDraft | null = null;
    const { net, root, form } = await setup([
      {
        method: 'POST',
        path: '/api/v1/reports',
        reply: (call) => {
          posted = call.json as ReportDraft;
          return { status: 201, body: acceptedRecord(posted) };
        },
      },
    ]);
    form.attach(FLAGGED);
    type(root, 'submitter', 'tech_rios');
    type(root, 'latitude', '14.6');
    type(root, 'longitude', '121.0');
    type(root, 'ph', '7.8');
    expect(submitButton(root).disabled).toBe(false);

    submitForm(root);
    await flush();

    expect(net.callsTo('/api/v1/reports')).toHaveLength(1);
    expect(posted!.location).toEqual({ latitude: 14.6, longitude: 121.0, source: 'manual' });
    expect(posted!.images).toEqual([FLAGGED]);
    expect(posted!.water).toEqual({ ph: 7.8 });
    const confirm = root.querySelector('[data-testid="report-confirm"]') as HTMLElement;
    expect(confirm.textContent).toBe('Report filed: feedbeef12345678');
  });

  it('prefills from the device fix and records source=device', async () => {
    Object.defineProperty(navigator, 'geolocation', {
      configurable: true,
      value: {
        getCurrentPosition(success: (pos: unknown) => void) {
          success({ coords: { latitude: -6.9, longitude: 110.4, accuracy: 8 } });
        },
      },
    });
    let posted: ReportDraft | null = null;
    const { root, form } = await setup([
      {
        method: 'POST',
        path: '/api/v1/reports',
        reply: (call) => {
          posted = call.json as ReportDraft;
          return { status: 201, body: acceptedRecord(posted) };
        },
      },
    ]);
    form.attach(FLAGGED);
    type(root, 'submitter', 'tech');

    (root.querySelector('[data-testid="use-device-location"]') as HTMLButtonElement).click();
    await flush();

    expect(input(root, 'latitude').value).toBe('-6.9');
    expect(input(root, 'longitude').value).toBe('110.4');
    const source = root.querySelector('[data-testid="geo-source"]') as HTMLElement;
    expect(source.textContent).toBe('device');

    submitForm(root);
    await flush();
    expect(posted!.location.source).toBe('device');
  });

  it('flips back to manual once a prefilled coordinate is edited', async () => {
    Object.defineProperty(navigator, 'geolocation', {
      configurable: true,
      value: {
        getCurrentPosition(success: (pos: unknown) => void) {
          success({ coords: { latitude: 1, longitude: 2, accuracy: 5 } });
        },
      },
    });
    const { root, form } = await setup([]);
    form.attach(FLAGGED);
    (root.querySelector('[data-testid="use-device-location"]') as HTMLButtonElement).click();
    await flush();
    expect(
      (root.querySelector('[data-testid="geo-source"]') as HTMLElement).textContent,
    ).toBe('device');

    type(root, 'latitude', '3');
    expect(
      (root.querySelector('[data-testid="geo-source"]') as HTMLElement).textContent,
    ).toBe('manual');
  });

  it('queues the draft when the API is unreachable and sends it on retry', async () => {
    let online = false;
    const { net, session, root, form } = await setup([
      {
        method: 'POST',
        path: '/api/v1/reports',
        reply: (call) => {
          if (!online) throw new TypeError('fetch failed');
          return { status: 201, body: acceptedRecord(call.json as ReportDraft) };
        },
      },
    ]);
    form.attach(FLAGGED);
    type(root, 'submitter', 'tech');
    type(root, 'latitude', '5');
    type(root, 'longitude', '6');

    submitForm(root);
    await flush();

    expect(session.pending).toHaveLength(1);
    const pendingBox = root.querySelector('[data-testid="pending-box"]') as HTMLElement;
    expect(pendingBox.classList.contains('hidden')).toBe(false);
    expect(
      (root.querySelector('[data-testid="pending-list"]') as HTMLElement).children,
    ).toHaveLength(1);

    online = true;
    (root.querySelector('[data-testid="retry-pending"]') as HTMLButtonElement).click();
    await flush();

    expect(session.pending).toHaveLength(0);
    expect(pendingBox.classList.contains('hidden')).toBe(true);
    expect(net.callsTo('/api/v1/reports')).toHaveLength(2);
    const confirm = root.querySelector('[data-testid="report-confirm"]') as HTMLElement;
    expect(confirm.textContent).toContain('Report filed:');
  });

  it('surfaces a server-side rejection verbatim', async () => {
    const { root, form } = await setup([
      {
        method: 'POST',
        path: '/api/v1/reports',
        reply: () => ({
          status: 400,
          body: { error: 'unknown sample id referenced by report', field: 'images' },
        }),
      },
    ]);
    form.attach(FLAGGED);
    type(root, 'submitter', 'tech');
    type(root, 'latitude', '5');
    type(root, 'longitude', '6');
    submitForm(root);
    await flush();

    const confirm = root.querySelector('[data-testid="report-confirm"]') as HTMLElement;
    expect(confirm.textContent).toContain('unknown sample id referenced by report');
  });
});
