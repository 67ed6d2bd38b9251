// Admin console: reports table with filters, sample grid with one-click
// relabel, model registry with activation. Server is the source of truth;
// every action re-fetches rather than patching local state.

import { ClientSession } from '../session.js';

export interface AdminView {
  root: HTMLElement;
  refreshReports(): Promise<void>;
  refreshSamples(): Promise<void>;
  refreshModels(): Promise<void>;
}

function escapeHtml(value: unknown): string {
  return String(value).replace(/[&<>"]/g, (c) =>
    c === '&' ? '&amp;' : c === '<' ? '&lt;' : c === '>' ? '&gt;' : '&quot;',
  );
}

export function renderAdminView(root: HTMLElement, session: ClientSession): AdminView {
  const labels = session.rules?.labels ?? [];
  const splits = session.rules?.splits ?? [];
  const decisions = session.rules?.decisions ?? [];

  root.innerHTML = `
    <section class="panel">
      <h2>Reports</h2>
      <div class="filters">
        <select data-testid="filter-decision">
          <option value="">any decision</option>
          ${decisions.map((d) => `<option value="${d}">${d}</option>`).join('')}
        </select>
        <input placeholder="bbox: min_lon,min_lat,max_lon,max_lat" data-testid="filter-bbox">
        <button data-testid="reload-reports">Reload</button>
      </div>
      <p class="status" data-testid="reports-error"></p>
      <table data-testid="reports-table">
        <thead><tr>
          <th>id</th><th>filed</th><th>lat</th><th>lon</th><th>images</th><th>decisions</th><th>submitter</th>
        </tr></thead>
        <tbody></tbody>
      </table>

      <h2>Dataset</h2>
      <div class="filters">
        <select data-testid="filter-label">
          <option value="">any label</option>
          ${labels.map((l) => `<option value="${l}">${l}</option>`).join('')}
        </select>
        <select data-testid="filter-split">
          <option value="">any split</option>
          ${splits.map((s) => `<option value="${s}">${s}</option>`).join('')}
        </select>
        <button data-testid="reload-samples">Reload</button>
        <a data-testid="export-link" href="#">Download archive</a>
      </div>
      <table data-testid="samples-table">
        <thead><tr><th>id</th><th>label</th><th>split</th><th>source</th><th>relabel</th></tr></thead>
        <tbody></tbody>
      </table>

      <h2>Models</h2>
      <table data-testid="models-table">
        <thead><tr><th>id</th><th>status</th><th></th></tr></thead>
        <tbody></tbody>
      </table>
    </section>`;

  (root.querySelector('[data-testid="export-link"]') as HTMLAnchorElement).href =
    session.api.exportUrl();

  const reportsBody = root.querySelector('[data-testid="reports-table"] tbody') as HTMLElement;
  const samplesBody = root.querySelector('[data-testid="samples-table"] tbody') as HTMLElement;
  const modelsBody = root.querySelector('[data-testid="models-table"] tbody') as HTMLElement;
  const reportsError = root.querySelector('[data-testid="reports-error"]') as HTMLElement;

  async function refreshReports() {
    const decision = (root.querySelector('[data-testid="filter-decision"]') as HTMLSelectElement)
      .value;
    const bbox = (root.querySelector('[data-testid="filter-bbox"]') as HTMLInputElement).value;
    reportsError.textContent = '';
    try {
      const { reports } = await session.api.reports({
        decision: decision || undefined,
        bbox: bbox.trim() || undefined,
      });
      reportsBody.innerHTML = reports
        .map((r) => {
          const ds = [...new Set(r.images.map((i) => i.prediction.decision))].join(', ');
          return `<tr data-report-id="${escapeHtml(r.id)}">
            <td>${escapeHtml(r.id)}</td>
            <td>${escapeHtml(r.created_at)}</td>
            <td>${escapeHtml(r.location.latitude)}</td>
            <td>${escapeHtml(r.location.longitude)}</td>
            <td>${r.images.length}</td>
            <td>${escapeHtml(ds)}</td>
            <td>${escapeHtml(r.submitter)}</td>
          </tr>`;
        })
        .join('');
    } catch (err) {
      // surface the API's own wording, field name included
      const field = (err as { field?: string }).field;
      reportsError.textContent =
        (err as Error).message + (field ? ` (field: ${field})` : '');
    }
  }

  async function refreshSamples() {
    const label = (root.querySelector('[data-testid="filter-label"]') as HTMLSelectElement).value;
    const split = (root.querySelector('[data-testid="filter-split"]') as HTMLSelectElement).value;
    const { samples } = await session.api.samples({
      label: label || undefined,
      split: split || undefined,
    });
    samplesBody.innerHTML = samples
      .map(
        (s) => `<tr data-sample-id="${escapeHtml(s.id)}">
          <td title="${escapeHtml(s.id)}">${escapeHtml(s.id.slice(0, 12))}…</td>
          <td data-testid="label-${escapeHtml(s.id)}">${escapeHtml(s.label)}</td>
          <td>${escapeHtml(s.split)}</td>
          <td>${escapeHtml(s.source)}</td>
          <td><select data-relabel="${escapeHtml(s.id)}">
            ${labels
              .map(
                (l) =>
                  `<option value="${l}"${l === s.label ? ' selected' : ''}>${l}</option>`,
              )
              .join('')}
          </select></td>
        </tr>`,
      )
      .join('');
    samplesBody.querySelectorAll('select[data-relabel]').forEach((el) => {
      el.addEventListener('change', async () => {
        const select = el as HTMLSelectElement;
        const id = select.getAttribute('data-relabel')!;
        await session.api.setLabel(id, select.value);
        await refreshSamples();
      });
    });
  }

  async function refreshModels() {
    const { models, active } = await session.api.models();
    modelsBody.innerHTML = models
      .map(
        (m) => `<tr data-model-id="${escapeHtml(m.id)}">
          <td>${escapeHtml(m.id)}</td>
          <td>${m.id === active ? '<span class="badge badge-active" data-testid="active-badge">active</span>' : ''}</td>
          <td><button data-activate="${escapeHtml(m.id)}"${m.id === active ? ' disabled' : ''}>Activate</button></td>
        </tr>`,
      )
      .join('');
    modelsBody.querySelectorAll('button[data-activate]').forEach((el) => {
      el.addEventListener('click', async () => {
        await session.api.activateModel(el.getAttribute('data-activate')!);
        await refreshModels();
      });
    });
  }

  root.querySelector('[data-testid="reload-reports"]')!.addEventListener('click', refreshReports);
  root.querySelector('[data-testid="filter-decision"]')!.addEventListener('change', refreshReports);
  root.querySelector('[data-testid="reload-samples"]')!.addEventListener('click', refreshSamples);
  root.querySelector('[data-testid="filter-label"]')!.addEventListener('change', refreshSamples);
  root.querySelector('[data-testid="filter-split"]')!.addEventListener('change', refreshSamples);

  return { root, refreshReports, refreshSamples, refreshModels };
}
