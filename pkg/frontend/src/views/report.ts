// Outbreak report form. Coordinates prefill from the device fix when the
// user allows it and flip to manual the moment they edit anything. Range
// checks run on every keystroke with the server's own rules, so a bad
// latitude never leaves the browser.

import { FlaggedImageBody, ReportDraft } from '../api.js';
import { checkField, checkRequired } from '../rules.js';
import { ClientSession } from '../session.js';

const WATER_FIELDS = ['temperature', 'ph', 'salinity', 'dissolved_oxygen', 'ammonia'];

export interface ReportFormView {
  root: HTMLElement;
  attach(img: FlaggedImageBody): void;
  readonly attached: FlaggedImageBody[];
}

export function renderReportForm(root: HTMLElement, session: ClientSession): ReportFormView {
  const waterRows = WATER_FIELDS.map(
    (f) => `
      <label>${f.replace('_', ' ')}
        <input name="${f}" inputmode="decimal" data-testid="in-${f}">
        <span class="field-error" data-testid="err-${f}"></span>
      </label>`,
  ).join('');

  root.innerHTML = `
    <section class="panel">
      <h2>File an outbreak report</h2>
      <ul class="attached" data-testid="attached-images"></ul>
      <p class="hint" data-testid="attach-hint">Attach at least one flagged image from the predict screen.</p>
      <form data-testid="report-form">
        <label>your name
          <input name="submitter" data-testid="in-submitter">
          <span class="field-error" data-testid="err-submitter"></span>
        </label>
        <fieldset>
          <legend>location (<span data-testid="geo-source">manual</span>)</legend>
          <button type="button" data-testid="use-device-location">Use device location</button>
          <label>latitude
            <input name="latitude" inputmode="decimal" data-testid="in-latitude">
            <span class="field-error" data-testid="err-latitude"></span>
          </label>
          <label>longitude
            <input name="longitude" inputmode="decimal" data-testid="in-longitude">
            <span class="field-error" data-testid="err-longitude"></span>
          </label>
        </fieldset>
        <fieldset>
          <legend>water (optional)</legend>
          ${waterRows}
        </fieldset>
        <label>notes
          <textarea name="notes" data-testid="in-notes"></textarea>
        </label>
        <button type="submit" data-testid="submit-report" disabled>Submit report</button>
      </form>
      <p class="confirm hidden" data-testid="report-confirm"></p>
      <div class="pending hidden" data-testid="pending-box">
        <h3>Pending reports (offline)</h3>
        <ul data-testid="pending-list"></ul>
        <button type="button" data-testid="retry-pending">Retry now</button>
      </div>
    </section>`;

  const form = root.querySelector('[data-testid="report-form"]') as HTMLFormElement;
  const submit = root.querySelector('[data-testid="submit-report"]') as HTMLButtonElement;
  const sourceLabel = root.querySelector('[data-testid="geo-source"]') as HTMLElement;
  const attachedList = root.querySelector('[data-testid="attached-images"]') as HTMLElement;
  const confirmBox = root.querySelector('[data-testid="report-confirm"]') as HTMLElement;
  const pendingBox = root.querySelector('[data-testid="pending-box"]') as HTMLElement;
  const pendingList = root.querySelector('[data-testid="pending-list"]') as HTMLElement;

  const attached: FlaggedImageBody[] = [];
  let geoSource = 'manual';

  const field = (name: string) =>
    root.querySelector(`[data-testid="in-${name}"]`) as HTMLInputElement;
  const errEl = (name: string) =>
    root.querySelector(`[data-testid="err-${name}"]`) as HTMLElement;

  function validate(): boolean {
    const rules = session.rules;
    if (!rules) return false;
    let ok = attached.length > 0;

    const submitter = field('submitter').value;
    const submitterErr = submitter.trim() === '' ? 'submitter is required' : null;
    errEl('submitter').textContent = submitterErr ?? '';
    if (submitterErr) ok = false;

    for (const name of ['latitude', 'longitude']) {
      const message = checkRequired(rules, name, field(name).value);
      errEl(name).textContent = message ?? '';
      if (message) ok = false;
    }
    for (const name of WATER_FIELDS) {
      const message = checkField(rules, name, field(name).value);
      errEl(name).textContent = message ?? '';
      if (message) ok = false;
    }
    submit.disabled = !ok;
    return ok;
  }

  function renderAttached() {
    attachedList.innerHTML = attached
      .map(
        (img) =>
          `<li>${img.sample_id.slice(0, 12)}… score ${img.prediction.score} (${img.prediction.decision})</li>`,
      )
      .join('');
    (root.querySelector('[data-testid="attach-hint"]') as HTMLElement).classList.toggle(
      'hidden',
      attached.length > 0,
    );
    validate();
  }

  function renderPending() {
    const items = session.pending;
    pendingBox.classList.toggle('hidden', items.length === 0);
    pendingList.innerHTML = items
      .map((p) => `<li>queued ${p.queuedAt} (${p.draft.images.length} image(s))</li>`)
      .join('');
  }

  form.addEventListener('input', (ev) => {
    const target = ev.target as HTMLElement;
    const name = target.getAttribute('name');
    if (name === 'latitude' || name === 'longitude') {
      geoSource = 'manual';
      sourceLabel.textContent = geoSource;
    }
    validate();
  });

  (root.querySelector('[data-testid="use-device-location"]') as HTMLButtonElement).addEventListener(
    'click',
    async () => {
      const fix = await session.captureLocation();
      if (!fix) return; // denied or unsupported; stay manual
      field('latitude').value = String(fix.latitude);
      field('longitude').value = String(fix.longitude);
      geoSource = 'device';
      sourceLabel.textContent = geoSource;
      validate();
    },
  );

  form.addEventListener('submit', async (ev) => {
    ev.preventDefault();
    if (!validate()) return;

    const water: Record<string, number> = {};
    for (const name of WATER_FIELDS) {
      const raw = field(name).value.trim();
      if (raw !== '') water[name] = Number(raw);
    }
    const notes = (root.querySelector('[data-testid="in-notes"]') as HTMLTextAreaElement).value;
    const draft: ReportDraft = {
      submitter: field('submitter').value.trim(),
      location: {
        latitude: Number(field('latitude').value),
        longitude: Number(field('longitude').value),
        source: geoSource,
      },
      images: attached.slice(),
      ...(Object.keys(water).length ? { water } : {}),
      ...(notes.trim() ? { notes: notes.trim() } : {}),
    };

    const outcome = await session.submitOrQueue(draft).catch((err) => {
      confirmBox.classList.remove('hidden');
      confirmBox.textContent = 'rejected: ' + (err as Error).message;
      return null;
    });
    if (!outcome) return;
    if (outcome.status === 'sent') {
      confirmBox.classList.remove('hidden');
      confirmBox.textContent = `Report filed: ${outcome.record.id}`;
      attached.length = 0;
      renderAttached();
      form.reset();
      submit.disabled = true;
    } else {
      confirmBox.classList.remove('hidden');
      confirmBox.textContent = 'Offline: report queued, will retry.';
    }
    renderPending();
  });

  (root.querySelector('[data-testid="retry-pending"]') as HTMLButtonElement).addEventListener(
    'click',
    async () => {
      const sent = await session.flushPending();
      if (sent.length) {
        confirmBox.classList.remove('hidden');
        confirmBox.textContent = `Report filed: ${sent[sent.length - 1].id}`;
      }
      renderPending();
    },
  );

  renderPending();

  return {
    root,
    attached,
    attach(img: FlaggedImageBody) {
      attached.push(img);
      renderAttached();
    },
  };
}
