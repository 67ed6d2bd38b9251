// Per-tab session state: API client, mirrored validation rules, last
// device fix, and the pending-report queue for spotty connections. A
// draft stays queued until the server acknowledges it with a report id.

import { ApiClient, ReportDraft, ReportRecord } from './api.js';
import { Rules, loadRules } from './rules.js';

export interface PendingDraft {
  draft: ReportDraft;
  queuedAt: string;
  lastError: string;
}

export interface DeviceFix {
  latitude: number;
  longitude: number;
  accuracy?: number;
}

export class ClientSession {
  rules: Rules | null = null;
  deviceFix: DeviceFix | null = null;
  readonly pending: PendingDraft[] = [];

  constructor(readonly api: ApiClient) {}

  async init(): Promise<Rules> {
    this.rules = await loadRules(this.api);
    return this.rules;
  }

  // resolves null when the browser has no geolocation or the user denies it
  captureLocation(): Promise<DeviceFix | null> {
    return new Promise((resolve) => {
      const geo = typeof navigator !== 'undefined' ? navigator.geolocation : undefined;
      if (!geo) {
        resolve(null);
        return;
      }
      geo.getCurrentPosition(
        (pos) => {
          this.deviceFix = {
            latitude: pos.coords.latitude,
            longitude: pos.coords.longitude,
            accuracy: pos.coords.accuracy ?? undefined,
          };
          resolve(this.deviceFix);
        },
        () => resolve(null),
        { timeout: 7000, maximumAge: 30_000 },
      );
    });
  }

  // submit now; on a network-level failure keep the draft for later
  async submitOrQueue(
    draft: ReportDraft,
  ): Promise<{ status: 'sent'; record: ReportRecord } | { status: 'queued' }> {
    try {
      const record = await this.api.submitReport(draft);
      return { status: 'sent', record };
    } catch (err) {
      if (err instanceof TypeError || (err instanceof Error && err.name === 'NetworkError')) {
        this.pending.push({
          draft,
          queuedAt: new Date().toISOString(),
          lastError: String(err),
        });
        return { status: 'queued' };
      }
      throw err; // validation errors are the caller's problem
    }
  }

  // retry everything in the queue; acknowledged drafts drop out
  async flushPending(): Promise<ReportRecord[]> {
    const sent: ReportRecord[] = [];
    for (let i = this.pending.length - 1; i >= 0; i--) {
      const item = this.pending[i];
      try {
        sent.push(await this.api.submitReport(item.draft));
        this.pending.splice(i, 1);
      } catch (err) {
        item.lastError = String(err);
      }
    }
    return sent;
  }
}
