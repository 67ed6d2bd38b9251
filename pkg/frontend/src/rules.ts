// Field range rules mirrored from the server. The client never hardcodes
// a bound: it loads GET /api/v1/schema once per session, so the two ends
// cannot drift.

import type { ApiClient, SchemaInfo } from './api.js';

export interface Range {
  min?: number;
  max?: number;
}

export interface Rules {
  ranges: Record<string, Range>;
  geoSources: string[];
  labels: string[];
  splits: string[];
  decisions: string[];
}

export async function loadRules(api: ApiClient): Promise<Rules> {
  const schema: SchemaInfo = await api.schema();
  return {
    ranges: schema.ranges,
    geoSources: schema.geo_sources,
    labels: schema.labels,
    splits: schema.splits,
    decisions: schema.decisions,
  };
}

// null when fine, otherwise a message naming the violated bound
export function checkField(rules: Rules, name: string, raw: string): string | null {
  if (raw.trim() === '') return null; // optional fields skip the check
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    return `${name} must be a number`;
  }
  const range = rules.ranges[name];
  if (!range) return null;
  if (range.min !== undefined && value < range.min) {
    return `${name} ${value} below minimum ${range.min}`;
  }
  if (range.max !== undefined && value > range.max) {
    return `${name} ${value} above maximum ${range.max}`;
  }
  return null;
}

export function checkRequired(rules: Rules, name: string, raw: string): string | null {
  if (raw.trim() === '') return `${name} is required`;
  return checkField(rules, name, raw);
}
