// Pure DOM builders. Every number and text shown here arrives from the
// backend payloads; the only arithmetic is layout (marker positions).

import type {
  FrameDescription,
  Incident,
  QueryHistoryEntry,
  RunDetail,
  RunSummary,
} from "./types";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBackendError(message: string): HTMLElement {
  const banner = el("div", "banner error");
  banner.setAttribute("role", "alert");
  banner.textContent = `Backend unreachable: ${message}`;
  return banner;
}

export function renderRunList(
  runs: RunSummary[],
  selectedId: string | null,
  onSelect: (runId: string) => void,
): HTMLElement {
  const container = el("nav", "run-list");
  container.appendChild(el("h2", undefined, "Runs"));
  if (runs.length === 0) {
    container.appendChild(el("p", "empty-state", "No runs yet. Analyze footage from the CLI."));
    return container;
  }
  const list = el("ul");
  for (const run of runs) {
    const item = el("li", run.run_id === selectedId ? "run-row selected" : "run-row");
    const button = el("button", "run-pick");
    button.dataset.runId = run.run_id;
    button.appendChild(el("span", "run-id", run.run_id));
    button.appendChild(
      el("span", "run-meta", `${run.duration_s}s · ${run.frame_count} frames`),
    );
    button.addEventListener("click", () => onSelect(run.run_id));
    item.appendChild(button);
    list.appendChild(item);
  }
  container.appendChild(list);
  return container;
}

export function renderSummary(detail: RunDetail): HTMLElement {
  const section = el("section", "summary");
  section.appendChild(el("h2", undefined, "Summary"));
  section.appendChild(
    el("p", "summary-text", detail.summary ?? "No summary was generated for this run."),
  );
  return section;
}

export interface TimelineHooks {
  frameUrl: (frameNumber: number) => string;
  onPick: (incident: Incident) => void;
}

export function renderTimeline(detail: RunDetail, hooks: TimelineHooks): HTMLElement {
  const section = el("section", "timeline-section");
  section.appendChild(el("h2", undefined, "Incident timeline"));
  if (detail.incidents.length === 0) {
    section.appendChild(el("p", "empty-state", "No incidents recorded for this run."));
    return section;
  }
  const track = el("div", "timeline");
  const seconds = new Map<number, number>(
    detail.descriptions.map((d) => [d.frame_number, d.timestamp_s]),
  );
  const stackDepth = new Map<number, number>();
  for (const incident of detail.incidents) {
    const at = seconds.get(incident.frame_number) ?? 0;
    const stacked = stackDepth.get(at) ?? 0;
    stackDepth.set(at, stacked + 1);
    const marker = el("button", "marker");
    const fraction = detail.duration_s > 0 ? at / detail.duration_s : 0;
    marker.style.left = `${(fraction * 100).toFixed(2)}%`;
    marker.style.bottom = `${6 + stacked * 14}px`;
    marker.dataset.frame = String(incident.frame_number);
    marker.dataset.stack = String(stacked);
    marker.title = `${incident.timestamp} · frame ${incident.frame_number}`;
    marker.addEventListener("click", () => hooks.onPick(incident));
    track.appendChild(marker);
  }
  section.appendChild(track);
  return section;
}

export function renderIncidentDetail(
  incident: Incident,
  description: FrameDescription | undefined,
  frameUrl: string,
): HTMLElement {
  const panel = el("article", "incident-detail");
  panel.appendChild(
    el("h3", undefined, `${incident.timestamp} — frame ${incident.frame_number}`),
  );
  const figure = el("figure", "frame-figure");
  const image = el("img", "frame-image");
  image.src = frameUrl;
  image.alt = `frame ${incident.frame_number}`;
  image.addEventListener("error", () => {
    const placeholder = el("div", "frame-placeholder", "frame image unavailable");
    figure.replaceChild(placeholder, image);
  });
  figure.appendChild(image);
  panel.appendChild(figure);
  panel.appendChild(el("p", "incident-info", incident.information));
  if (description && description.text && description.text !== incident.information) {
    panel.appendChild(el("p", "frame-description", description.text));
  }
  return panel;
}

export function renderIncidentTable(incidents: Incident[]): HTMLElement {
  const table = el("table", "incident-table");
  const head = el("tr");
  for (const column of ["Timestamp", "Frame Number", "Information"]) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);
  for (const incident of incidents) {
    const row = el("tr", "incident-row");
    row.appendChild(el("td", undefined, incident.timestamp));
    row.appendChild(el("td", undefined, String(incident.frame_number)));
    row.appendChild(el("td", undefined, incident.information));
    table.appendChild(row);
  }
  return table;
}

export interface QueryPanelHandle {
  element: HTMLElement;
  setPending(pending: boolean): void;
}

export function renderQueryPanel(onSubmit: (query: string) => void): QueryPanelHandle {
  const section = el("section", "query-panel");
  section.appendChild(el("h2", undefined, "Query this run"));
  const form = el("form", "query-form");
  const input = el("input") as HTMLInputElement;
  input.type = "text";
  input.placeholder = "e.g. accidents";
  input.className = "query-input";
  const submit = el("button", "query-submit", "Ask") as HTMLButtonElement;
  submit.type = "submit";
  submit.disabled = true;
  let pending = false;
  const refresh = () => {
    submit.disabled = pending || input.value.trim().length === 0;
  };
  input.addEventListener("input", refresh);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const query = input.value.trim();
    if (!query || pending) return;
    onSubmit(query);
  });
  form.appendChild(input);
  form.appendChild(submit);
  section.appendChild(form);
  return {
    element: section,
    setPending(value: boolean) {
      pending = value;
      refresh();
    },
  };
}

export function renderQueryHistory(entries: QueryHistoryEntry[]): HTMLElement {
  const section = el("section", "query-history");
  for (const entry of entries) {
    const panel = el("article", "query-result");
    panel.appendChild(el("h3", undefined, `Query: ${entry.query}`));
    if (entry.error !== undefined) {
      panel.appendChild(el("p", "query-error", entry.error));
    } else if (entry.result) {
      if (entry.result.incidents.length > 0) {
        panel.appendChild(renderIncidentTable(entry.result.incidents));
      } else {
        panel.appendChild(el("p", "empty-state", "No matching frames."));
      }
      if (entry.result.parse_warning) {
        panel.appendChild(
          el("p", "parse-warning", "Some provider output did not parse; raw text below."),
        );
        panel.appendChild(el("pre", "raw-text", entry.result.raw_text));
      }
    }
    section.appendChild(panel);
  }
  return section;
}
