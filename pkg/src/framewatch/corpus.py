"""Durable run records: per-frame descriptions, manifests, query artifacts.

Each run owns one directory under the data root::

    <data_root>/<run_id>/
        manifest.json        # schema_version, config snapshot, summary, incidents, stats
        descriptions.jsonl   # append-only, one FrameDescription per line
        frames/              # cached stills, %06d.<ext>
        queries/             # 000.json, 001.json, ... appended by incident queries
        report.md, report.json, incidents.csv

The descriptions log is append-only and crash-tolerant: a truncated tail is
reported with its line number while every earlier record stays loadable.
Runs are immutable after analysis; queries only append new artifacts.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .config import PipelineConfig
from .errors import (
    CorruptRecordError,
    DuplicateFrameError,
    RunExistsError,
    RunNotFoundError,
    StoreError,
)
from .evaluation import TimingStats
from .ingest import MEDIA_TYPES, ImagePayload

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def format_timestamp(seconds: float) -> str:
    """Render video time as zero-padded mm:ss (minutes grow past 59)."""
    if seconds < 0:
        raise ValueError(f"timestamp must be >= 0, got {seconds}")
    total = int(seconds)
    return f"{total // 60:02d}:{total % 60:02d}"


@dataclass(frozen=True)
class FrameDescription:
    """One vision-provider output bound to its frame number and timestamp."""

    frame_number: int
    timestamp_s: float
    text: str
    latency_s: float = 0.0
    blocked: bool = False

    def __post_init__(self):
        if self.frame_number < 0:
            raise ValueError("frame_number must be >= 0")
        if self.timestamp_s < 0:
            raise ValueError("timestamp_s must be >= 0")
        if self.blocked and self.text:
            raise ValueError("blocked descriptions carry no text")

    def to_dict(self) -> dict:
        return {
            "frame_number": self.frame_number,
            "timestamp_s": self.timestamp_s,
            "text": self.text,
            "latency_s": self.latency_s,
            "blocked": self.blocked,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrameDescription":
        return cls(
            frame_number=int(data["frame_number"]),
            timestamp_s=float(data["timestamp_s"]),
            text=str(data["text"]),
            latency_s=float(data.get("latency_s", 0.0)),
            blocked=bool(data.get("blocked", False)),
        )


@dataclass(frozen=True)
class IncidentRecord:
    """One incident-table row: mm:ss timestamp, frame number, information text."""

    timestamp: str
    frame_number: int
    information: str

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "frame_number": self.frame_number,
            "information": self.information,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IncidentRecord":
        return cls(
            timestamp=str(data["timestamp"]),
            frame_number=int(data["frame_number"]),
            information=str(data["information"]),
        )


@dataclass
class AnalysisRun:
    """The persisted unit: config snapshot, descriptions, summary, incidents, stats."""

    run_id: str
    config_snapshot: PipelineConfig
    descriptions: list = field(default_factory=list)
    summary: Optional[str] = None
    incidents: list = field(default_factory=list)
    stats: TimingStats = field(default_factory=TimingStats)
    created_at: str = ""
    source: dict = field(default_factory=dict)

    def description_timestamps(self) -> dict:
        return {d.frame_number: d.timestamp_s for d in self.descriptions}


def build_paragraph(descriptions: Sequence[FrameDescription]) -> str:
    """Concatenate non-blocked descriptions, one cited line per frame.

    Line format: ``Frame {n} ({mm:ss}): {text}`` so downstream prompts can
    reference both the frame number and the timestamp. Empty input gives "".
    """
    lines = [
        f"Frame {d.frame_number} ({format_timestamp(d.timestamp_s)}): {d.text}"
        for d in descriptions
        if not d.blocked
    ]
    return "\n".join(lines)


class RunWriter:
    """Single writer for one run's append-only descriptions log."""

    def __init__(self, path: Path, existing_frames: Iterable[int] = ()):
        self._path = path
        self._frames = set(existing_frames)
        self._lock = threading.Lock()
        self._handle = path.open("a", encoding="utf-8")

    def append_description(self, description: FrameDescription) -> None:
        """Durably append one record; duplicate frame numbers are refused."""
        with self._lock:
            if description.frame_number in self._frames:
                raise DuplicateFrameError(
                    f"frame {description.frame_number} already has a description"
                )
            line = json.dumps(description.to_dict(), sort_keys=True, ensure_ascii=False)
            try:
                self._handle.write(line + "\n")
                self._handle.flush()
                os.fsync(self._handle.fileno())
            except OSError as exc:
                raise StoreError(f"failed to append description: {exc}") from exc
            self._frames.add(description.frame_number)

    def close(self) -> None:
        with self._lock:
            if not self._handle.closed:
                self._handle.close()

    def __enter__(self) -> "RunWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class RunStore:
    """Filesystem-backed store of runs under one data root."""

    def __init__(self, data_root: str | Path):
        self.data_root = Path(data_root)
        self.data_root.mkdir(parents=True, exist_ok=True)

    # -- paths ------------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        if not run_id or "/" in run_id or run_id.startswith("."):
            raise StoreError(f"invalid run id {run_id!r}")
        return self.data_root / run_id

    def _manifest_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "manifest.json"

    def _log_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "descriptions.jsonl"

    def exists(self, run_id: str) -> bool:
        return self._manifest_path(run_id).is_file()

    def list_runs(self) -> list[str]:
        """Run ids sorted by creation time recorded in their manifests."""
        entries = []
        for manifest in sorted(self.data_root.glob("*/manifest.json")):
            try:
                payload = json.loads(manifest.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                logger.warning("skipping unreadable manifest %s", manifest)
                continue
            entries.append((payload.get("created_at", ""), manifest.parent.name))
        return [run_id for _, run_id in sorted(entries)]

    # -- creation / persistence -------------------------------------------

    def create_run(
        self,
        run_id: str,
        cfg: PipelineConfig,
        source: dict | None = None,
        created_at: str | None = None,
    ) -> AnalysisRun:
        """Allocate a run directory and write its initial manifest."""
        run_directory = self.run_dir(run_id)
        if self.exists(run_id) or self._log_path(run_id).exists():
            raise RunExistsError(f"run {run_id!r} already exists (runs are immutable)")
        run_directory.mkdir(parents=True, exist_ok=True)
        (run_directory / "frames").mkdir(exist_ok=True)
        run = AnalysisRun(
            run_id=run_id,
            config_snapshot=cfg,
            created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
            source=dict(source or {}),
        )
        self._write_manifest(run)
        return run

    def open_writer(self, run_id: str) -> RunWriter:
        if not self.exists(run_id):
            raise RunNotFoundError(f"run {run_id!r} not found under {self.data_root}")
        log_path = self._log_path(run_id)
        existing = []
        if log_path.exists():
            existing = [d.frame_number for d in self.read_descriptions(run_id)]
        return RunWriter(log_path, existing)

    def save_run(self, run: AnalysisRun) -> None:
        """Persist manifest (and the descriptions log when absent).

        Serialization is deterministic, so save -> load -> save is
        byte-stable. An existing descriptions log is never rewritten.
        """
        frame_numbers = {d.frame_number for d in run.descriptions}
        for incident in run.incidents:
            if incident.frame_number not in frame_numbers:
                raise StoreError(
                    f"incident references frame {incident.frame_number} "
                    "with no stored description"
                )
        run_directory = self.run_dir(run.run_id)
        run_directory.mkdir(parents=True, exist_ok=True)
        self._write_manifest(run)
        log_path = self._log_path(run.run_id)
        if not log_path.exists():
            ordered = sorted(run.descriptions, key=lambda d: d.frame_number)
            with log_path.open("w", encoding="utf-8") as handle:
                for description in ordered:
                    handle.write(
                        json.dumps(description.to_dict(), sort_keys=True, ensure_ascii=False) + "\n"
                    )

    def load_run(self, run_id: str, include_queries: bool = True) -> AnalysisRun:
        """Rebuild a run from disk. With ``include_queries`` the most recent
        query's incidents take precedence over the manifest's."""
        manifest_path = self._manifest_path(run_id)
        if not manifest_path.is_file():
            raise RunNotFoundError(f"run {run_id!r} not found under {self.data_root}")
        try:
            payload = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"{manifest_path}: corrupt manifest: {exc}") from exc
        run = AnalysisRun(
            run_id=payload["run_id"],
            config_snapshot=PipelineConfig.from_dict(payload["config"]),
            descriptions=self.read_descriptions(run_id),
            summary=payload.get("summary"),
            incidents=[IncidentRecord.from_dict(i) for i in payload.get("incidents", [])],
            stats=TimingStats.from_dict(payload.get("stats")),
            created_at=payload.get("created_at", ""),
            source=payload.get("source", {}),
        )
        if include_queries:
            queries = self.list_query_artifacts(run_id)
            if queries:
                run.incidents = [
                    IncidentRecord.from_dict(i) for i in queries[-1].get("incidents", [])
                ]
        return run

    def read_descriptions(self, run_id: str) -> list:
        """All records from the log, frame-number ascending regardless of
        arrival order. Corruption raises with the 1-based line number; the
        error carries every record that parsed before it."""
        log_path = self._log_path(run_id)
        if not log_path.exists():
            if not self.exists(run_id):
                raise RunNotFoundError(f"run {run_id!r} not found under {self.data_root}")
            return []
        records: list[FrameDescription] = []
        seen: set[int] = set()
        with log_path.open("r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    record = FrameDescription.from_dict(json.loads(stripped))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise CorruptRecordError(
                        log_path, line_number, str(exc), sorted(records, key=lambda d: d.frame_number)
                    ) from exc
                if record.frame_number in seen:
                    raise CorruptRecordError(
                        log_path,
                        line_number,
                        f"duplicate frame_number {record.frame_number}",
                        sorted(records, key=lambda d: d.frame_number),
                    )
                seen.add(record.frame_number)
                records.append(record)
        return sorted(records, key=lambda d: d.frame_number)

    # -- frame images -------------------------------------------------------

    def add_frame_image(self, run_id: str, frame_number: int, payload: ImagePayload) -> Path:
        extension = {v: k for k, v in MEDIA_TYPES.items()}.get(payload.media_type, ".png")
        frames_dir = self.run_dir(run_id) / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)
        path = frames_dir / f"{frame_number:06d}{extension}"
        path.write_bytes(payload.data)
        return path

    def frame_path(self, run_id: str, frame_number: int) -> Optional[Path]:
        frames_dir = self.run_dir(run_id) / "frames"
        if not frames_dir.is_dir():
            return None
        matches = sorted(frames_dir.glob(f"{frame_number:06d}.*"))
        return matches[0] if matches else None

    # -- query artifacts ----------------------------------------------------

    def append_query_artifact(self, run_id: str, payload: dict) -> Path:
        """Persist one query's text, raw provider output, and parsed incidents."""
        if not self.exists(run_id):
            raise RunNotFoundError(f"run {run_id!r} not found under {self.data_root}")
        queries_dir = self.run_dir(run_id) / "queries"
        queries_dir.mkdir(exist_ok=True)
        index = len(list(queries_dir.glob("*.json")))
        path = queries_dir / f"{index:03d}.json"
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return path

    def list_query_artifacts(self, run_id: str) -> list[dict]:
        queries_dir = self.run_dir(run_id) / "queries"
        if not queries_dir.is_dir():
            return []
        artifacts = []
        for path in sorted(queries_dir.glob("*.json")):
            try:
                artifacts.append(json.loads(path.read_text(encoding="utf-8")))
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path}: corrupt query artifact: {exc}") from exc
        return artifacts

    # -- internals ----------------------------------------------------------

    def _write_manifest(self, run: AnalysisRun) -> None:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "run_id": run.run_id,
            "created_at": run.created_at,
            "source": run.source,
            "config": run.config_snapshot.to_dict(),
            "summary": run.summary,
            "incidents": [i.to_dict() for i in run.incidents],
            "stats": run.stats.to_dict(),
        }
        self._manifest_path(run.run_id).write_text(
            json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
