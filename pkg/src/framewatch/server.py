"""Local HTTP service over a run store, consumed by the analyst UI.

Read endpoints expose runs, reports, frames, and thumbnails; the single write
endpoint submits an incident query against a run (appending a query artifact,
never mutating existing descriptions). Intended for localhost use only.
"""

from __future__ import annotations

import io
import json
import logging
import threading
from collections import defaultdict
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .corpus import RunStore, build_paragraph
from .errors import FramewatchError, ReportError, RunNotFoundError
from .providers import make_provider
from .report import ReportFormat, render_report
from .summarize import query_incidents

logger = logging.getLogger(__name__)

_REPORT_MEDIA_TYPES = {
    ReportFormat.STRUCTURED_JSON: "application/json",
    ReportFormat.CSV_TABLE: "text/csv",
    ReportFormat.MARKDOWN: "text/markdown",
}


class QueryBody(BaseModel):
    query: str


def create_app(
    data_root: str | Path,
    provider=None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service. ``provider`` overrides each run's configured
    provider spec for query submissions (tests pass a mock directly)."""
    store = RunStore(data_root)
    app = FastAPI(title="framewatch", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    query_locks: dict = defaultdict(threading.Lock)
    locks_guard = threading.Lock()

    def _load_run(run_id: str):
        try:
            return store.load_run(run_id)
        except RunNotFoundError:
            raise HTTPException(status_code=404, detail=f"run {run_id!r} not found")

    @app.get("/api/runs")
    def list_runs():
        entries = []
        for run_id in store.list_runs():
            run = store.load_run(run_id)
            duration = max((d.timestamp_s for d in run.descriptions), default=0.0)
            entries.append(
                {
                    "run_id": run.run_id,
                    "created_at": run.created_at,
                    "frame_count": len(run.descriptions),
                    "duration_s": duration,
                    "incident_count": len(run.incidents),
                    "has_summary": run.summary is not None,
                }
            )
        return entries

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        run = _load_run(run_id)
        return {
            "run_id": run.run_id,
            "created_at": run.created_at,
            "source": run.source,
            "summary": run.summary,
            "incidents": [i.to_dict() for i in run.incidents],
            "descriptions": [d.to_dict() for d in run.descriptions],
            "duration_s": max((d.timestamp_s for d in run.descriptions), default=0.0),
            "stats": run.stats.to_dict(),
            "config": run.config_snapshot.to_dict(),
            "queries": store.list_query_artifacts(run_id),
        }

    @app.get("/api/runs/{run_id}/report")
    def get_report(run_id: str, format: str = "json"):
        run = _load_run(run_id)
        try:
            fmt = ReportFormat(format)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown report format {format!r}")
        try:
            body = render_report(run, fmt, store.list_query_artifacts(run_id))
        except ReportError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return Response(content=body, media_type=_REPORT_MEDIA_TYPES[fmt])

    @app.get("/api/runs/{run_id}/frames/{frame_number}")
    def get_frame(run_id: str, frame_number: int):
        _load_run(run_id)
        path = store.frame_path(run_id, frame_number)
        if path is None:
            raise HTTPException(status_code=404, detail=f"no image for frame {frame_number}")
        from .ingest import MEDIA_TYPES

        return FileResponse(path, media_type=MEDIA_TYPES.get(path.suffix.lower(), "image/png"))

    @app.get("/api/runs/{run_id}/thumbnails/{frame_number}")
    def get_thumbnail(run_id: str, frame_number: int):
        _load_run(run_id)
        path = store.frame_path(run_id, frame_number)
        if path is None:
            raise HTTPException(status_code=404, detail=f"no image for frame {frame_number}")
        image = Image.open(path)
        image.thumbnail((256, 256))
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/runs/{run_id}/query")
    def submit_query(run_id: str, body: QueryBody):
        if not body.query.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        run = _load_run(run_id)
        paragraph = build_paragraph(run.descriptions)
        if not paragraph:
            raise HTTPException(status_code=409, detail="run has an empty description corpus")
        cfg = run.config_snapshot
        active_provider = provider or make_provider(
            cfg.provider_spec, cfg.retry_attempts, cfg.rate_limit_per_s
        )
        with locks_guard:
            lock = query_locks[run_id]
        with lock:  # one in-flight query per run
            try:
                result = query_incidents(
                    paragraph, body.query, cfg, active_provider, run.descriptions
                )
            except FramewatchError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            artifact = {
                "query": result.query,
                "raw_text": result.raw_text,
                "parse_warning": result.parse_warning,
                "incidents": [i.to_dict() for i in result.incidents],
            }
            store.append_query_artifact(run_id, artifact)
        return artifact

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    data_root: str | Path,
    host: str = "127.0.0.1",
    port: int = 8787,
    provider=None,
    ui_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(data_root, provider=provider, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
