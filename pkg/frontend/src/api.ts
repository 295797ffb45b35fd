import type { QueryResult, RunDetail, RunSummary } from "./types";

/** Thin fetch wrapper over the serve endpoints; all data flows through here. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async listRuns(): Promise<RunSummary[]> {
    return this.getJson<RunSummary[]>("/api/runs");
  }

  async getRun(runId: string): Promise<RunDetail> {
    return this.getJson<RunDetail>(`/api/runs/${encodeURIComponent(runId)}`);
  }

  async submitQuery(runId: string, query: string): Promise<QueryResult> {
    const response = await fetch(
      `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/query`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ query }),
      },
    );
    if (!response.ok) {
      throw new Error(await describeFailure(response));
    }
    return (await response.json()) as QueryResult;
  }

  frameUrl(runId: string, frameNumber: number): string {
    return `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/frames/${frameNumber}`;
  }

  thumbnailUrl(runId: string, frameNumber: number): string {
    return `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/thumbnails/${frameNumber}`;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) {
      throw new Error(await describeFailure(response));
    }
    return (await response.json()) as T;
  }
}

async function describeFailure(response: Response): Promise<string> {
  try {
    const payload = (await response.json()) as { detail?: string };
    if (payload && payload.detail) {
      return `${response.status}: ${payload.detail}`;
    }
  } catch {
    // fall through to the generic message
  }
  return `${response.status}: request failed`;
}
