// Backend payload fixtures mirroring the serve API shapes. The seven-row
// incident table and six-frame accident query match the Python test fixtures.

import { vi } from "vitest";
import type { QueryResult, RunDetail, RunSummary } from "../src/types";

export const KEY_INCIDENT_ROWS: Array<[number, string]> = [
  [2, "Shows the general traffic conditions during the day"],
  [10, "Shows the traffic situation on the road, with various types of vehicles"],
  [15, "Shows a motorcycle accident"],
  [18, "Shows a motorcycle rider who has lost control of his bike"],
  [20, "Shows a motorcycle rider who has been knocked off his bike by a car."],
  [23, "Shows a motorcycle rider who has been injured in a collision with a car."],
  [27, "Shows a road with blue and white lines, surrounded by trees and buildings."],
];

export const ACCIDENT_ROWS: Array<[number, string]> = [
  [14, "A motorcycle accident is shown in this frame. A motorcyclist is lying on the ground, injured."],
  [15, "A motorcyclist has fallen off his bike and is lying in the middle of the road."],
  [17, "A motorcycle rider has lost control of his bike and fallen to the ground."],
  [20, "This frame depicts a motorcycle accident on a busy road."],
  [23, "The image shows a motorcycle rider on a busy road after being knocked off his bike by a car."],
  [24, "The picture shows the aftermath of a motorcycle accident."],
];

export const SUMMARY_TEXT =
  "The video shows a busy road with various types of vehicles, including cars, " +
  "motorcycles, auto-rickshaws, and buses. The video also includes footage of a " +
  "motorcycle accident.";

function pad(n: number): string {
  return n < 10 ? `0${n}` : String(n);
}

export function trafficDetail(): RunDetail {
  return {
    run_id: "traffic",
    created_at: "2026-01-01T00:00:00+00:00",
    source: { kind: "frame_dir", path: "fixture" },
    summary: SUMMARY_TEXT,
    incidents: KEY_INCIDENT_ROWS.map(([frame, information]) => ({
      timestamp: `00:${pad(frame)}`,
      frame_number: frame,
      information,
    })),
    descriptions: KEY_INCIDENT_ROWS.map(([frame, text]) => ({
      frame_number: frame,
      timestamp_s: frame,
      text,
      latency_s: 0,
      blocked: false,
    })),
    duration_s: 27,
    stats: {},
    config: {},
    queries: [],
  };
}

export function accidentQueryResult(): QueryResult {
  return {
    query: "accidents",
    raw_text: ACCIDENT_ROWS.map(([frame, text]) => `FRAME ${frame}: ${text}`).join("\n"),
    parse_warning: false,
    incidents: ACCIDENT_ROWS.map(([frame, information]) => ({
      timestamp: `00:${pad(frame)}`,
      frame_number: frame,
      information,
    })),
  };
}

export function runSummaries(): RunSummary[] {
  return [
    {
      run_id: "traffic",
      created_at: "2026-01-01T00:00:00+00:00",
      frame_count: 7,
      duration_s: 27,
      incident_count: 7,
      has_summary: true,
    },
  ];
}

export interface MockBackend {
  runs: RunSummary[];
  details: Record<string, RunDetail>;
  queryResult?: QueryResult;
  queryStatus?: number;
  queryDetail?: string;
  /** Every submitted query body, in order. */
  submitted: string[];
  /** When true, POSTed queries park until releaseQueries() is called. */
  holdQueries: boolean;
  releaseQueries: () => void;
}

/** Install a fetch mock speaking the serve API; returns the backend state. */
export function installMockBackend(overrides: Partial<MockBackend> = {}): MockBackend {
  let parked: Array<() => void> = [];
  const backend: MockBackend = {
    runs: runSummaries(),
    details: { traffic: trafficDetail() },
    queryResult: accidentQueryResult(),
    submitted: [],
    holdQueries: false,
    releaseQueries: () => {
      parked.forEach((release) => release());
      parked = [];
    },
    ...overrides,
  };
  const fetchMock = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    if (path === "/api/runs") {
      return jsonResponse(backend.runs);
    }
    const detailMatch = path.match(/^\/api\/runs\/([^/]+)$/);
    if (detailMatch) {
      const detail = backend.details[decodeURIComponent(detailMatch[1])];
      return detail
        ? jsonResponse(detail)
        : jsonResponse({ detail: "run not found" }, 404);
    }
    const queryMatch = path.match(/^\/api\/runs\/([^/]+)\/query$/);
    if (queryMatch && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as { query: string };
      backend.submitted.push(body.query);
      if (backend.holdQueries) {
        await new Promise<void>((resolve) => parked.push(resolve));
      }
      if (backend.queryStatus && backend.queryStatus >= 400) {
        return jsonResponse({ detail: backend.queryDetail ?? "query failed" }, backend.queryStatus);
      }
      return jsonResponse({ ...backend.queryResult!, query: body.query });
    }
    return jsonResponse({ detail: `unmocked path ${path}` }, 404);
  });
  vi.stubGlobal("fetch", fetchMock);
  return backend;
}

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
