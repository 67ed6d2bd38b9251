// Thin fetch wrapper for the /api/v1 surface. Every number the UI shows
// comes out of one of these responses; nothing is computed client-side.

export interface SaliencyBlock {
  baseline_score: number;
  side: number;
  overlay_png: string; // data: URI, render as-is
}

export interface PredictionResponse {
  sample_id: string;
  score: number;
  decision: string;
  model_id: string;
  latency_ms: number;
  input_provenance: string;
  saliency?: SaliencyBlock;
}

export interface GeoPointBody {
  latitude: number;
  longitude: number;
  source?: string;
  accuracy?: number;
}

export interface FlaggedImageBody {
  sample_id: string;
  prediction: { score: number; decision: string };
}

export interface ReportDraft {
  submitter: string;
  location: GeoPointBody;
  images: FlaggedImageBody[];
  water?: Record<string, number>;
  environment?: { air_temperature?: number; weather_note?: string };
  notes?: string;
}

export interface ReportRecord {
  id: string;
  created_at: string;
  location: GeoPointBody;
  images: FlaggedImageBody[];
  water: Record<string, number>;
  environment: Record<string, unknown>;
  notes: string | null;
  submitter: string;
}

export interface SampleRecord {
  id: string;
  label: string;
  split: string;
  source: string;
  captured_at: string;
  [key: string]: unknown;
}

export interface ModelEntry {
  id: string;
  active: boolean;
  [key: string]: unknown;
}

export interface SchemaInfo {
  ranges: Record<string, { min?: number; max?: number }>;
  decisions: string[];
  labels: string[];
  splits: string[];
  geo_sources: string[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly base: string,
    private readonly doFetch: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, '') + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.doFetch(this.url(path), init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? resp.statusText, body.field);
    }
    return body as T;
  }

  health() {
    return this.request<{ status: string; active_model: string | null }>('/api/v1/health');
  }

  schema() {
    return this.request<SchemaInfo>('/api/v1/schema');
  }

  predict(image: Blob, filename: string, saliency = true): Promise<PredictionResponse> {
    const form = new FormData();
    form.append('image', image, filename);
    const qs = saliency ? '?saliency=true&patch_side=8&stride=4' : '';
    return this.request<PredictionResponse>('/api/v1/predict' + qs, {
      method: 'POST',
      body: form,
    });
  }

  submitReport(draft: ReportDraft): Promise<ReportRecord> {
    return this.request<ReportRecord>('/api/v1/reports', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(draft),
    });
  }

  reports(filter: { from?: string; to?: string; bbox?: string; decision?: string } = {}) {
    const params = new URLSearchParams();
    for (const [k, v] of Object.entries(filter)) {
      if (v) params.set(k, v);
    }
    const qs = params.toString();
    return this.request<{ reports: ReportRecord[] }>(
      '/api/v1/reports' + (qs ? '?' + qs : ''),
    );
  }

  report(id: string) {
    return this.request<ReportRecord>('/api/v1/reports/' + id);
  }

  samples(filter: { label?: string; split?: string } = {}) {
    const params = new URLSearchParams();
    if (filter.label) params.set('label', filter.label);
    if (filter.split) params.set('split', filter.split);
    const qs = params.toString();
    return this.request<{ samples: SampleRecord[] }>(
      '/api/v1/dataset/samples' + (qs ? '?' + qs : ''),
    );
  }

  setLabel(sampleId: string, label: string, editor = 'web-admin') {
    return this.request<SampleRecord>(`/api/v1/dataset/samples/${sampleId}/label`, {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ label, editor }),
    });
  }

  sampleImageUrl(sampleId: string): string {
    return this.url(`/api/v1/dataset/samples/${sampleId}/image`);
  }

  models() {
    return this.request<{ models: ModelEntry[]; active: string | null }>('/api/v1/models');
  }

  activateModel(modelId: string) {
    return this.request<{ active: string }>(`/api/v1/models/${modelId}/activate`, {
      method: 'POST',
    });
  }

  exportUrl(): string {
    return this.url('/api/v1/dataset/export');
  }
}
