"""End-to-end analysis: sample -> detect -> gate -> describe -> persist -> summarize.

Describe calls run on a bounded worker pool but results are appended through
the run's single writer in frame order, so the descriptions log is
deterministic for deterministic backends. Every stage failure is annotated
with the stage name; whatever reached the log before the failure stays there.
"""

from __future__ import annotations

import logging
import math
import uuid
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .config import PipelineConfig, PromptingMode, SubmissionMode, render_prompt
from .corpus import AnalysisRun, FrameDescription, RunStore, build_paragraph
from .errors import ConfigError, FramewatchError
from .evaluation import Stage, TimingStats, record_latency
from .gate import GateDecision, apply_gate, crop
from .ingest import FrameSample
from .providers import ProviderRequest, build_collage
from .report import ReportFormat, render_report
from .summarize import query_incidents, summarize_run

logger = logging.getLogger(__name__)


def new_run_id() -> str:
    return uuid.uuid4().hex[:12]


def run_analysis(
    store: RunStore,
    cfg: PipelineConfig,
    frames: Sequence[FrameSample],
    detector,
    provider,
    run_id: Optional[str] = None,
    source: Optional[dict] = None,
    query: Optional[str] = None,
    created_at: Optional[str] = None,
) -> AnalysisRun:
    """Run the full gated-description pipeline and persist the result.

    ``query`` is mandatory in direct prompting mode (it is embedded in every
    vision prompt); in indirect mode it optionally triggers an incident query
    against the fresh corpus after summarization.
    """
    if cfg.prompting_mode is PromptingMode.DIRECT and not query:
        raise ConfigError("direct prompting mode needs a query to embed in the vision prompt")

    frames = list(frames)
    run_id = run_id or new_run_id()
    run = store.create_run(run_id, cfg, source=source, created_at=created_at)
    stats = TimingStats()

    for frame in frames:
        store.add_frame_image(run_id, frame.frame_number, frame.image)

    decisions = _gate_frames(frames, cfg, detector)
    passed = [f for f, d in zip(frames, decisions) if d.passed]
    logger.info("gate passed %d of %d frames", len(passed), len(frames))

    writer = store.open_writer(run_id)
    try:
        descriptions = _describe_frames(passed, decisions, cfg, provider, writer, stats, query)
    finally:
        writer.close()

    run.descriptions = descriptions
    paragraph = build_paragraph(descriptions)
    if paragraph:
        with _stage("summarize"):
            run.summary = summarize_run(paragraph, cfg, provider, stats)
    else:
        logger.info("no describable frames; skipping summarization")

    queries = None
    if query and cfg.prompting_mode is PromptingMode.INDIRECT and paragraph:
        with _stage("query"):
            result = query_incidents(paragraph, query, cfg, provider, descriptions, stats)
        run.incidents = result.incidents
        artifact = {
            "query": result.query,
            "raw_text": result.raw_text,
            "parse_warning": result.parse_warning,
            "incidents": [i.to_dict() for i in result.incidents],
        }
        store.append_query_artifact(run_id, artifact)
        queries = [artifact]

    run.stats = stats
    with _stage("persist"):
        store.save_run(run)
        write_reports(store, run, queries)
    return run


def write_reports(store: RunStore, run: AnalysisRun, queries: Optional[list] = None) -> dict:
    """Render report artifacts into the run directory; skipped (not failed)
    for runs with nothing to report yet."""
    run_dir = store.run_dir(run.run_id)
    if run.summary is None and not run.incidents:
        logger.info("run %s has no summary or incidents; skipping report files", run.run_id)
        return {}
    paths = {}
    for fmt, name in (
        (ReportFormat.MARKDOWN, "report.md"),
        (ReportFormat.STRUCTURED_JSON, "report.json"),
        (ReportFormat.CSV_TABLE, "incidents.csv"),
    ):
        path = run_dir / name
        path.write_bytes(render_report(run, fmt, queries))
        paths[fmt.value] = path
    return paths


def _gate_frames(
    frames: Sequence[FrameSample], cfg: PipelineConfig, detector
) -> list[GateDecision]:
    """Detect on a bounded pool; decisions come back in frame order."""
    with _stage("detect"):
        with ThreadPoolExecutor(max_workers=cfg.max_parallel_calls) as pool:
            futures = [pool.submit(detector.detect, frame) for frame in frames]
            detections = [f.result() for f in futures]
    return [
        apply_gate(dets, cfg, frame.frame_number)
        for frame, dets in zip(frames, detections)
    ]


def _describe_frames(
    passed: Sequence[FrameSample],
    decisions: Sequence[GateDecision],
    cfg: PipelineConfig,
    provider,
    writer,
    stats: TimingStats,
    query: Optional[str],
) -> list[FrameDescription]:
    """Issue vision calls (one per frame, one sequence call, or one collage
    call) and append results through the single writer in frame order."""
    if not passed:
        return []
    decision_by_frame = {d.frame_number: d for d in decisions}

    if cfg.submission_mode is SubmissionMode.PER_FRAME:
        requests = [
            _frame_request(frame, decision_by_frame[frame.frame_number], cfg, query)
            for frame in passed
        ]
        anchors = list(passed)
    else:
        requests = [_batch_request(passed, cfg)]
        anchors = [passed[0]]

    descriptions: list[FrameDescription] = []
    with _stage("describe"):
        with ThreadPoolExecutor(max_workers=cfg.max_parallel_calls) as pool:
            futures = [pool.submit(provider.describe, request) for request in requests]
            for frame, future in zip(anchors, futures):
                response = future.result()
                record_latency(stats, Stage.VISION, response.latency_s)
                description = FrameDescription(
                    frame_number=frame.frame_number,
                    timestamp_s=frame.timestamp_s,
                    text=response.text,
                    latency_s=response.latency_s,
                    blocked=response.blocked,
                )
                writer.append_description(description)
                descriptions.append(description)
    return descriptions


def _frame_request(
    frame: FrameSample, decision: GateDecision, cfg: PipelineConfig, query: Optional[str]
) -> ProviderRequest:
    image = frame.image
    if cfg.crop_to_detection and decision.detections:
        image = crop(frame, decision.detections[0], cfg.crop_margin_frac)
    if cfg.prompting_mode is PromptingMode.DIRECT:
        prompt = render_prompt(cfg.describe_prompt, {"query": query or ""})
        context_key = f"{frame.frame_number}:{query}"
    else:
        prompt = cfg.describe_prompt
        context_key = str(frame.frame_number)
    return ProviderRequest(
        images=(image,), prompt=prompt, params=cfg.vision_params, context_key=context_key
    )


def _batch_request(passed: Sequence[FrameSample], cfg: PipelineConfig) -> ProviderRequest:
    context_key = f"{passed[0].frame_number}..{passed[-1].frame_number}"
    if cfg.submission_mode is SubmissionMode.COLLAGE:
        columns = max(1, math.ceil(math.sqrt(len(passed))))
        images = (build_collage(passed, columns),)
    else:
        images = tuple(frame.image for frame in passed)
    return ProviderRequest(
        images=images, prompt=cfg.describe_prompt, params=cfg.vision_params, context_key=context_key
    )


class _stage:
    """Annotate escaping exceptions with the failing stage's name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, Exception):
            if not getattr(exc, "stage", None):
                exc.stage = self.name
            if isinstance(exc, FramewatchError):
                logger.error("%s stage failed: %s", self.name, exc)
        return False
