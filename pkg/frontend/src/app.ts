// Entry point: one session, three tabs. The API base defaults to the
// page's own origin so the static files can be served next to the API.

import { ApiClient } from './api.js';
import { ClientSession } from './session.js';
import { renderAdminView } from './views/admin.js';
import { renderPredictView } from './views/predict.js';
import { renderReportForm } from './views/report.js';

export async function boot(appRoot: HTMLElement, apiBase?: string): Promise<ClientSession> {
  const base = apiBase ?? appRoot.dataset.apiBase ?? window.location.origin;
  const session = new ClientSession(new ApiClient(base));

  appRoot.innerHTML = `
    <header>
      <h1>wssvwatch</h1>
      <nav>
        <button data-tab="predict" class="active">Predict</button>
        <button data-tab="report">Report</button>
        <button data-tab="admin">Admin</button>
      </nav>
    </header>
    <main>
      <div data-pane="predict"></div>
      <div data-pane="report" class="hidden"></div>
      <div data-pane="admin" class="hidden"></div>
    </main>`;

  await session.init();

  const pane = (name: string) =>
    appRoot.querySelector(`[data-pane="${name}"]`) as HTMLElement;

  function switchTab(name: string) {
    appRoot.querySelectorAll('[data-pane]').forEach((el) => {
      el.classList.toggle('hidden', el.getAttribute('data-pane') !== name);
    });
    appRoot.querySelectorAll('nav button').forEach((el) => {
      el.classList.toggle('active', el.getAttribute('data-tab') === name);
    });
  }

  const reportForm = renderReportForm(pane('report'), session);
  renderPredictView(pane('predict'), session, (img) => {
    reportForm.attach(img);
    switchTab('report');
  });
  const admin = renderAdminView(pane('admin'), session);

  appRoot.querySelectorAll('nav button').forEach((el) => {
    el.addEventListener('click', () => {
      const name = el.getAttribute('data-tab')!;
      switchTab(name);
      if (name === 'admin') {
        void admin.refreshReports();
        void admin.refreshSamples();
        void admin.refreshModels();
      }
    });
  });

  return session;
}

// auto-boot when loaded as the page script
if (typeof document !== 'undefined') {
  const root = document.getElementById('app');
  if (root) {
    void boot(root);
  }
}
