import { ApiClient } from "./api";
import type { Incident, QueryHistoryEntry, RunDetail } from "./types";
import {
  el,
  renderBackendError,
  renderIncidentDetail,
  renderQueryHistory,
  renderQueryPanel,
  renderRunList,
  renderSummary,
  renderTimeline,
} from "./views";

/** Wires the views to the API: run picking, incident picking, query history. */
export class App {
  private selectedRunId: string | null = null;
  private detail: RunDetail | null = null;
  private history: QueryHistoryEntry[] = [];
  private pendingQuery = false;

  private sidebar: HTMLElement;
  private main: HTMLElement;

  constructor(private api: ApiClient, private root: HTMLElement) {
    this.root.textContent = "";
    const header = el("header");
    header.appendChild(el("h1", undefined, "framewatch console"));
    this.root.appendChild(header);
    const layout = el("div", "layout");
    this.sidebar = el("aside", "sidebar");
    this.main = el("main", "content");
    layout.appendChild(this.sidebar);
    layout.appendChild(this.main);
    this.root.appendChild(layout);
  }

  async start(): Promise<void> {
    await this.refreshRunList();
  }

  async refreshRunList(): Promise<void> {
    this.sidebar.textContent = "";
    try {
      const runs = await this.api.listRuns();
      this.sidebar.appendChild(
        renderRunList(runs, this.selectedRunId, (runId) => void this.selectRun(runId)),
      );
    } catch (error) {
      this.sidebar.appendChild(renderBackendError(messageOf(error)));
    }
  }

  async selectRun(runId: string): Promise<void> {
    try {
      this.detail = await this.api.getRun(runId);
    } catch (error) {
      this.main.textContent = "";
      this.main.appendChild(renderBackendError(messageOf(error)));
      return;
    }
    this.selectedRunId = runId;
    // Seed the session history with the run's persisted queries.
    this.history = this.detail.queries.map((result) => ({ query: result.query, result }));
    this.pendingQuery = false;
    await this.refreshRunList();
    this.renderRunView();
  }

  private renderRunView(): void {
    if (!this.detail) return;
    const detail = this.detail;
    this.main.textContent = "";
    this.main.appendChild(renderSummary(detail));
    this.main.appendChild(
      renderTimeline(detail, {
        frameUrl: (frame) => this.api.frameUrl(detail.run_id, frame),
        onPick: (incident) => this.showIncident(incident),
      }),
    );
    this.incidentSlot = el("div", "incident-slot");
    this.main.appendChild(this.incidentSlot);
    const panel = renderQueryPanel((query) => void this.submitQuery(query));
    this.queryPanel = panel;
    panel.setPending(this.pendingQuery);
    this.main.appendChild(panel.element);
    this.historySlot = el("div", "history-slot");
    this.historySlot.appendChild(renderQueryHistory(this.history));
    this.main.appendChild(this.historySlot);
  }

  private incidentSlot: HTMLElement = el("div");
  private historySlot: HTMLElement = el("div");
  private queryPanel: { setPending(pending: boolean): void } | null = null;

  showIncident(incident: Incident): void {
    if (!this.detail) return;
    const description = this.detail.descriptions.find(
      (d) => d.frame_number === incident.frame_number,
    );
    this.incidentSlot.textContent = "";
    this.incidentSlot.appendChild(
      renderIncidentDetail(
        incident,
        description,
        this.api.frameUrl(this.detail.run_id, incident.frame_number),
      ),
    );
  }

  async submitQuery(query: string): Promise<void> {
    if (!this.detail || this.pendingQuery) return;
    this.pendingQuery = true;
    this.queryPanel?.setPending(true);
    try {
      const result = await this.api.submitQuery(this.detail.run_id, query);
      this.history.push({ query, result });
    } catch (error) {
      this.history.push({ query, error: messageOf(error) });
    } finally {
      this.pendingQuery = false;
      this.queryPanel?.setPending(false);
    }
    this.historySlot.textContent = "";
    this.historySlot.appendChild(renderQueryHistory(this.history));
  }
}

function messageOf(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}
