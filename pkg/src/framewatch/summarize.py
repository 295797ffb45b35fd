"""Whole-run summaries and structured incident queries over the description corpus.

Incident queries ask the text provider to answer one line per relevant frame,
``FRAME <n>: <information>``; those lines parse into incident records with
timestamps looked up from the run. The raw provider text is always kept next
to the parsed records so nothing is silently dropped.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config import PipelineConfig, PromptingMode, render_prompt
from .corpus import FrameDescription, IncidentRecord, format_timestamp
from .errors import ConfigError, EvaluationError
from .evaluation import Stage, TimingStats, record_latency
from .ingest import FrameSample
from .providers import ProviderRequest, ProviderResponse

logger = logging.getLogger(__name__)

FRAME_LINE_RE = re.compile(r"^FRAME (\d+): (.+)$")

STRUCTURED_OUTPUT_INSTRUCTION = (
    'Answer with one line per relevant frame, formatted exactly as '
    '"FRAME <frame number>: <information>".'
)


@dataclass
class QueryResult:
    """Parsed incidents plus the untouched provider text for auditing."""

    query: str
    incidents: list = field(default_factory=list)
    raw_text: str = ""
    parse_warning: bool = False


def render_frame_lines(records: Sequence[IncidentRecord]) -> str:
    """Serialize incident records back into the query output grammar."""
    return "\n".join(f"FRAME {r.frame_number}: {r.information}" for r in records)


def parse_frame_lines(
    text: str, timestamps: Mapping[int, float]
) -> tuple[list[IncidentRecord], int]:
    """Extract well-formed ``FRAME <n>: <information>`` lines as incident records.

    Only frames present in ``timestamps`` (the run's descriptions) become
    records; anything else stays in the raw text. Returns the records and the
    count of FRAME-shaped lines that referenced unknown frames.
    """
    records: list[IncidentRecord] = []
    unknown = 0
    for line in text.splitlines():
        match = FRAME_LINE_RE.match(line)
        if not match:
            continue
        frame_number = int(match.group(1))
        if frame_number not in timestamps:
            unknown += 1
            logger.warning("query answer cites frame %d which has no description", frame_number)
            continue
        records.append(
            IncidentRecord(
                timestamp=format_timestamp(timestamps[frame_number]),
                frame_number=frame_number,
                information=match.group(2),
            )
        )
    return records, unknown


def summarize_run(
    paragraph: str,
    cfg: PipelineConfig,
    provider,
    stats: TimingStats | None = None,
) -> str:
    """Summarize the description paragraph; the provider's text is the summary."""
    if not paragraph:
        raise EvaluationError("cannot summarize an empty description paragraph")
    prompt = f"{cfg.summarize_prompt}\n\n{paragraph}"
    response: ProviderResponse = provider.generate_text(prompt, cfg.text_params)
    if stats is not None:
        record_latency(stats, Stage.TEXT, response.latency_s)
    return response.text


def query_incidents(
    paragraph: str,
    query: str,
    cfg: PipelineConfig,
    provider,
    descriptions: Sequence[FrameDescription],
    stats: TimingStats | None = None,
) -> QueryResult:
    """Ask a specific question of the corpus and parse the structured answer."""
    if not paragraph:
        raise EvaluationError("cannot query an empty description paragraph")
    if not query:
        raise EvaluationError("query must be non-empty")
    if not cfg.query_prompt:
        raise ConfigError("config has no query_prompt")
    question = render_prompt(cfg.query_prompt, {"query": query})
    prompt = f"{question}\n{STRUCTURED_OUTPUT_INSTRUCTION}\n\n{paragraph}"
    response: ProviderResponse = provider.generate_text(prompt, cfg.text_params)
    if stats is not None:
        record_latency(stats, Stage.TEXT, response.latency_s)
    timestamps = {d.frame_number: d.timestamp_s for d in descriptions}
    records, unknown = parse_frame_lines(response.text, timestamps)
    warning = bool(response.text) and not records
    if warning:
        logger.warning("no parseable FRAME lines in query answer; raw text preserved")
    return QueryResult(
        query=query,
        incidents=records,
        raw_text=response.text,
        parse_warning=warning or unknown > 0,
    )


def direct_describe_query(
    frame: FrameSample,
    query: str,
    cfg: PipelineConfig,
    provider,
) -> ProviderResponse:
    """Direct-mode per-frame call: the vision prompt itself embeds the query."""
    if cfg.prompting_mode is not PromptingMode.DIRECT:
        raise ConfigError("direct_describe_query requires prompting_mode=direct")
    prompt = render_prompt(cfg.describe_prompt, {"query": query})
    request = ProviderRequest(
        images=(frame.image,),
        prompt=prompt,
        params=cfg.vision_params,
        context_key=f"{frame.frame_number}:{query}",
    )
    return provider.describe(request)
