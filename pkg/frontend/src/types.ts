// Wire types mirroring the serve API (docs/http-api.md, schema version 1).
// The console renders these values; it never derives analysis results itself.

export interface RunSummary {
  run_id: string;
  created_at: string;
  frame_count: number;
  duration_s: number;
  incident_count: number;
  has_summary: boolean;
}

export interface Incident {
  timestamp: string;
  frame_number: number;
  information: string;
}

export interface FrameDescription {
  frame_number: number;
  timestamp_s: number;
  text: string;
  latency_s: number;
  blocked: boolean;
}

export interface QueryResult {
  query: string;
  raw_text: string;
  parse_warning: boolean;
  incidents: Incident[];
}

export interface RunDetail {
  run_id: string;
  created_at: string;
  source: Record<string, string>;
  summary: string | null;
  incidents: Incident[];
  descriptions: FrameDescription[];
  duration_s: number;
  stats: Record<string, unknown>;
  config: Record<string, unknown>;
  queries: QueryResult[];
}

/** One entry in the session's query history: a result, or the backend error verbatim. */
export interface QueryHistoryEntry {
  query: string;
  result?: QueryResult;
  error?: string;
}
