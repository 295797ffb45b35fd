"""framewatch: detection-gated video analysis with vision-language providers.

Sample frames from footage, gate them on object detections, describe the
survivors with a vision provider, persist the description corpus, summarize
it, answer incident queries against it, and score generated text with an
embedding-based word-match metric.
"""

from .config import (
    GenerationParams,
    PipelineConfig,
    PromptingMode,
    SubmissionMode,
    load_config,
    render_prompt,
    save_config,
)
from .corpus import (
    AnalysisRun,
    FrameDescription,
    IncidentRecord,
    RunStore,
    build_paragraph,
    format_timestamp,
)
from .evaluation import (
    EmbeddingStore,
    SimilarityResult,
    Stage,
    TimingStats,
    cosine,
    load_embeddings,
    load_stopwords,
    match_words,
    preprocess,
    record_latency,
    score_batch,
)
from .gate import Detection, GateDecision, MockDetector, apply_gate, crop, make_detector
from .ingest import FrameSample, ImagePayload, load_image_sequence, sample_video
from .pipeline import run_analysis
from .providers import (
    MockProvider,
    ProviderRequest,
    ProviderResponse,
    build_collage,
    make_provider,
)
from .report import ReportFormat, build_report, parse_report, render_report
from .summarize import (
    QueryResult,
    direct_describe_query,
    parse_frame_lines,
    query_incidents,
    render_frame_lines,
    summarize_run,
)

__version__ = "0.1.0"
