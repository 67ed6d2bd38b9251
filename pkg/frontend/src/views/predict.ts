// Capture/upload screen: pick a photo, send it to the API, show what came
// back. The card renders the response fields verbatim; no client math.

import { FlaggedImageBody, PredictionResponse } from '../api.js';
import { ClientSession } from '../session.js';

export interface PredictView {
  root: HTMLElement;
  lastResponse: PredictionResponse | null;
}

export function renderPredictView(
  root: HTMLElement,
  session: ClientSession,
  onFlag: (img: FlaggedImageBody) => void,
): PredictView {
  root.innerHTML = `
    <section class="panel">
      <h2>Check a shrimp photo</h2>
      <input type="file" accept="image/*" capture="environment" data-testid="photo-input">
      <p class="status" data-testid="predict-status"></p>
      <div class="card hidden" data-testid="result-card">
        <span class="badge" data-testid="decision-badge"></span>
        <dl>
          <dt>score</dt><dd data-testid="score"></dd>
          <dt>model</dt><dd data-testid="model-id"></dd>
          <dt>latency</dt><dd><span data-testid="latency"></span> ms</dd>
        </dl>
        <img class="overlay" alt="saliency overlay" data-testid="overlay">
        <button class="hidden" data-testid="file-report-cta">File a report for this image</button>
      </div>
    </section>`;

  const input = root.querySelector('[data-testid="photo-input"]') as HTMLInputElement;
  const status = root.querySelector('[data-testid="predict-status"]') as HTMLElement;
  const card = root.querySelector('[data-testid="result-card"]') as HTMLElement;
  const badge = root.querySelector('[data-testid="decision-badge"]') as HTMLElement;
  const cta = root.querySelector('[data-testid="file-report-cta"]') as HTMLButtonElement;

  const view: PredictView = { root, lastResponse: null };

  function show(resp: PredictionResponse) {
    view.lastResponse = resp;
    card.classList.remove('hidden');
    // decision text straight off the response; styling keyed on it
    const suspected = resp.decision === 'wssv';
    badge.textContent = suspected ? 'WSSV suspected' : resp.decision;
    badge.className = 'badge ' + (suspected ? 'badge-wssv' : 'badge-healthy');
    (root.querySelector('[data-testid="score"]') as HTMLElement).textContent =
      String(resp.score);
    (root.querySelector('[data-testid="model-id"]') as HTMLElement).textContent =
      resp.model_id;
    (root.querySelector('[data-testid="latency"]') as HTMLElement).textContent =
      String(resp.latency_ms);
    const overlay = root.querySelector('[data-testid="overlay"]') as HTMLImageElement;
    if (resp.saliency) {
      overlay.src = resp.saliency.overlay_png;
      overlay.classList.remove('hidden');
    } else {
      overlay.classList.add('hidden');
    }
    cta.classList.toggle('hidden', !suspected);
  }

  input.addEventListener('change', async () => {
    const file = input.files?.[0];
    if (!file) return;
    status.textContent = 'scoring...';
    try {
      const resp = await session.api.predict(file, file.name, true);
      status.textContent = '';
      show(resp);
    } catch (err) {
      status.textContent = 'prediction failed: ' + (err as Error).message;
      card.classList.add('hidden');
    }
  });

  cta.addEventListener('click', () => {
    const resp = view.lastResponse;
    if (!resp) return;
    onFlag({
      sample_id: resp.sample_id,
      prediction: { score: resp.score, decision: resp.decision },
    });
  });

  return view;
}
