"""Run reports: one in-memory representation, three renderings.

The machine-readable JSON form, the incident-table CSV, and the markdown
digest all derive from the same ``RunReport`` built out of an ``AnalysisRun``,
so the renderings cannot diverge. Rendering is deterministic: the same run
yields byte-identical documents.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .corpus import AnalysisRun, FrameDescription, IncidentRecord, format_timestamp
from .errors import ReportError

REPORT_SCHEMA_VERSION = 1

INCIDENT_COLUMNS = ("Timestamp", "Frame Number", "Information")


class ReportFormat(str, Enum):
    STRUCTURED_JSON = "json"
    CSV_TABLE = "csv"
    MARKDOWN = "markdown"


@dataclass
class RunReport:
    run_id: str
    created_at: str
    summary: str | None
    incidents: list
    descriptions: list
    stats: dict
    config: dict
    raw_outputs: list = field(default_factory=list)


def build_report(run: AnalysisRun, queries: Sequence[dict] | None = None) -> RunReport:
    """Assemble the single in-memory report all renderings derive from."""
    if run.summary is None and not run.incidents:
        raise ReportError(
            f"run {run.run_id!r} is incomplete: no summary and no incidents to report"
        )
    raw_outputs = [
        {"query": q.get("query", ""), "raw_text": q.get("raw_text", "")}
        for q in (queries or [])
    ]
    return RunReport(
        run_id=run.run_id,
        created_at=run.created_at,
        summary=run.summary,
        incidents=list(run.incidents),
        descriptions=list(run.descriptions),
        stats=run.stats.to_dict(),
        config=run.config_snapshot.to_dict(),
        raw_outputs=raw_outputs,
    )


def render_report(
    run: AnalysisRun,
    fmt: ReportFormat | str,
    queries: Sequence[dict] | None = None,
) -> bytes:
    """Render a completed run; markdown embeds the incident table, csv is the
    incident table alone, json is the full structured report."""
    report = build_report(run, queries)
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.STRUCTURED_JSON:
        return _render_json(report)
    if fmt is ReportFormat.CSV_TABLE:
        return _render_csv(report)
    return _render_markdown(report)


def parse_report(data: bytes) -> RunReport:
    """Parse the structured JSON rendering back into an equal RunReport."""
    payload = json.loads(data.decode("utf-8"))
    return RunReport(
        run_id=payload["run_id"],
        created_at=payload["created_at"],
        summary=payload["summary"],
        incidents=[IncidentRecord.from_dict(i) for i in payload["incidents"]],
        descriptions=[FrameDescription.from_dict(d) for d in payload["descriptions"]],
        stats=payload["stats"],
        config=payload["config"],
        raw_outputs=payload["raw_outputs"],
    )


def _render_json(report: RunReport) -> bytes:
    payload = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "run_id": report.run_id,
        "created_at": report.created_at,
        "summary": report.summary,
        "incidents": [i.to_dict() for i in report.incidents],
        "descriptions": [d.to_dict() for d in report.descriptions],
        "stats": report.stats,
        "config": report.config,
        "raw_outputs": report.raw_outputs,
    }
    return (json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def _render_csv(report: RunReport) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INCIDENT_COLUMNS)
    for incident in report.incidents:
        writer.writerow([incident.timestamp, incident.frame_number, incident.information])
    return buf.getvalue().encode("utf-8")


def _render_markdown(report: RunReport) -> bytes:
    lines: list[str] = [f"# Analysis run `{report.run_id}`", ""]
    if report.created_at:
        lines += [f"Created: {report.created_at}", ""]

    lines += ["## Summary", "", report.summary if report.summary else "_No summary generated._", ""]

    lines += ["## Incidents", ""]
    if report.incidents:
        lines.append("| " + " | ".join(INCIDENT_COLUMNS) + " |")
        lines.append("| " + " | ".join("---" for _ in INCIDENT_COLUMNS) + " |")
        for incident in report.incidents:
            info = incident.information.replace("|", "\\|")
            lines.append(f"| {incident.timestamp} | {incident.frame_number} | {info} |")
    else:
        lines.append("_No incidents recorded._")
    lines.append("")

    lines += ["## Frame descriptions", ""]
    if report.descriptions:
        for d in report.descriptions:
            stamp = format_timestamp(d.timestamp_s)
            text = "[blocked by safety settings]" if d.blocked else d.text
            lines.append(f"- Frame {d.frame_number} ({stamp}): {text}")
    else:
        lines.append("_No frames were described._")
    lines.append("")

    lines += ["## Timing", ""]
    lines.append("| Stage | Calls | Mean (s) | Min (s) | Max (s) |")
    lines.append("| --- | --- | --- | --- | --- |")
    for stage, entry in sorted(report.stats.items()):
        if entry.get("count"):
            lines.append(
                f"| {stage} | {entry['count']} | {entry['mean_s']:.4f} "
                f"| {entry['min_s']:.4f} | {entry['max_s']:.4f} |"
            )
        else:
            lines.append(f"| {stage} | 0 | - | - | - |")
    lines.append("")

    if report.raw_outputs:
        lines += ["## Raw query outputs", ""]
        for entry in report.raw_outputs:
            lines += [f"### Query: {entry['query']}", "", "```", entry["raw_text"], "```", ""]

    return "\n".join(lines).encode("utf-8")
