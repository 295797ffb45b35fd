"""Embedding-based caption scoring and pipeline timing statistics.

Scoring pipeline: lowercase and strip punctuation, drop stopwords, then match
generated tokens to ground-truth tokens one-to-one by cosine similarity of
their word vectors. A ground-truth token counts as matched when some unused
generated token clears the similarity threshold (strictly greater than);
tokens without a vector can only match by exact string equality. The score
is 100 * M / G where M is the number of matched ground-truth tokens and G the
ground-truth token count, so it always lies in [0, 100].
"""

from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import EmbeddingFormatError, EvaluationError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.6

_PUNCTUATION_TABLE = str.maketrans("", "", string.punctuation)


class Stage(str, Enum):
    """Pipeline stages whose latency we track."""

    VISION = "vision"
    TEXT = "text"


@dataclass
class StageStats:
    count: int = 0
    total_s: float = 0.0
    min_s: float = math.inf
    max_s: float = 0.0

    @property
    def mean_s(self) -> float:
        return self.total_s / self.count if self.count else 0.0

    def to_dict(self) -> dict:
        if self.count == 0:
            return {"count": 0, "mean_s": None, "min_s": None, "max_s": None}
        return {"count": self.count, "mean_s": self.mean_s, "min_s": self.min_s, "max_s": self.max_s}


@dataclass
class TimingStats:
    """Per-stage latency samples; updates are serialized by the caller."""

    stages: dict = field(default_factory=lambda: {stage: StageStats() for stage in Stage})

    def stage(self, stage: Stage) -> StageStats:
        return self.stages[Stage(stage)]

    def to_dict(self) -> dict:
        return {stage.value: self.stages[stage].to_dict() for stage in Stage}

    @classmethod
    def from_dict(cls, data: dict | None) -> "TimingStats":
        stats = cls()
        for stage in Stage:
            entry = (data or {}).get(stage.value)
            if not entry or not entry.get("count"):
                continue
            s = stats.stages[stage]
            s.count = int(entry["count"])
            s.min_s = float(entry["min_s"])
            s.max_s = float(entry["max_s"])
            s.total_s = float(entry["mean_s"]) * s.count
        return stats


def record_latency(stats: TimingStats, stage: Stage, seconds: float) -> TimingStats:
    """Fold one latency sample into the stage's count/mean/min/max."""
    if seconds < 0:
        raise EvaluationError(f"latency must be >= 0, got {seconds}")
    s = stats.stage(stage)
    s.count += 1
    s.total_s += seconds
    s.min_s = min(s.min_s, seconds)
    s.max_s = max(s.max_s, seconds)
    return stats


def load_stopwords(path: str | Path | None = None) -> frozenset:
    """Load the stopword list (one word per line, '#' comments allowed).

    Defaults to the list shipped with the package. Entries get the same
    normalization as ``preprocess`` so forms like "don't" match the token
    "dont" that preprocessing produces.
    """
    if path is None:
        text = resources.files("framewatch.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        normalized = line.lower().translate(_PUNCTUATION_TABLE)
        if normalized:
            words.add(normalized)
    return frozenset(words)


def preprocess(text: str, stopwords: Iterable[str]) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace, drop stopwords.

    Token order and duplicates are preserved; the empty list is a valid result.
    """
    stopword_set = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    tokens = text.lower().translate(_PUNCTUATION_TABLE).split()
    return [t for t in tokens if t not in stopword_set]


class EmbeddingStore:
    """Immutable word -> vector map with a single fixed dimension."""

    def __init__(self, vectors: dict):
        if not vectors:
            raise EvaluationError("embedding store must not be empty")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise EvaluationError(f"inconsistent vector dimensions: {sorted(dims)}")
        self._vectors = {w: np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        self.dim = dims.pop()

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, word: str) -> Optional[np.ndarray]:
        return self._vectors.get(word)

    def words(self) -> list[str]:
        return sorted(self._vectors)


def load_embeddings(path: str | Path, restrict_to: Iterable[str] | None = None) -> EmbeddingStore:
    """Load a plain-text embedding file: one ``word c1 ... cd`` line per word.

    ``restrict_to`` keeps only the listed words (bounds memory when loading
    the public 300-dimension files). Raises ``EmbeddingFormatError`` naming
    the offending line on dimension mismatch, bad components, or zero vectors.
    """
    path = Path(path)
    wanted = {w.lower() for w in restrict_to} if restrict_to is not None else None
    vectors: dict = {}
    dim: int | None = None
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            word, _, rest = line.partition(" ")
            components = rest.split()
            if not word or not components:
                raise EmbeddingFormatError(path, line_number, "expected 'word c1 ... cd'")
            if dim is None:
                dim = len(components)
            elif len(components) != dim:
                raise EmbeddingFormatError(
                    path, line_number, f"expected {dim} components, found {len(components)}"
                )
            word = word.lower()
            if wanted is not None and word not in wanted:
                continue
            if word in vectors:
                continue  # first occurrence wins
            try:
                vector = np.array([float(c) for c in components], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(path, line_number, f"unparseable component: {exc}") from exc
            if not np.any(vector):
                raise EmbeddingFormatError(path, line_number, "zero vector is not usable")
            vectors[word] = vector
    if not vectors:
        raise EvaluationError(f"{path}: no usable vectors loaded")
    return EmbeddingStore(vectors)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity dot(a, b) / (|a| * |b|); rejects zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EvaluationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise EvaluationError("cosine is undefined for zero vectors")
    return float(np.dot(a, b)) / (norm_a * norm_b)


class MatchPair(NamedTuple):
    generated: str
    truth: str
    score: float


@dataclass(frozen=True)
class SimilarityResult:
    matched: int
    ground_truth_count: int
    percentage: float
    pairs: tuple


def match_words(
    generated: Sequence[str],
    truth: Sequence[str],
    store: EmbeddingStore,
    threshold: float = DEFAULT_THRESHOLD,
) -> SimilarityResult:
    """Greedy one-to-one matching of ground-truth tokens against generated tokens.

    Ground-truth tokens are visited in order; each takes the unused generated
    token with the highest cosine similarity strictly above ``threshold``
    (ties go to the leftmost). A token missing from the store matches only a
    string-equal token (scored 1.0). Each side is used at most once, so
    M <= G and the percentage 100 * M / G stays within [0, 100].
    """
    if not truth:
        raise EvaluationError("ground truth token list must be non-empty")
    if not 0.0 < threshold < 1.0:
        raise EvaluationError(f"threshold must be in (0, 1), got {threshold}")
    used = [False] * len(generated)
    pairs: list[MatchPair] = []
    for truth_token in truth:
        truth_vec = store.get(truth_token)
        best_idx = -1
        best_score = -math.inf
        for idx, gen_token in enumerate(generated):
            if used[idx]:
                continue
            gen_vec = store.get(gen_token)
            if truth_vec is not None and gen_vec is not None:
                score = cosine(truth_vec, gen_vec)
                if score <= threshold:
                    continue
            elif gen_token == truth_token:
                score = 1.0
            else:
                continue
            if score > best_score:
                best_idx = idx
                best_score = score
        if best_idx >= 0:
            used[best_idx] = True
            pairs.append(MatchPair(generated[best_idx], truth_token, best_score))
    matched = len(pairs)
    ground_truth_count = len(truth)
    return SimilarityResult(
        matched=matched,
        ground_truth_count=ground_truth_count,
        percentage=100.0 * matched / ground_truth_count,
        pairs=tuple(pairs),
    )


def score_batch(
    pairs: Sequence[tuple],
    store: EmbeddingStore,
    stopwords: Iterable[str],
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[list[SimilarityResult], float]:
    """Score (generated, truth) text pairs; returns per-pair results and the
    unweighted mean percentage. A pair whose truth text preprocesses to no
    tokens is an error naming the pair index."""
    if not pairs:
        raise EvaluationError("no pairs to score")
    stopword_set = set(stopwords)
    results: list[SimilarityResult] = []
    for index, (generated_text, truth_text) in enumerate(pairs):
        truth_tokens = preprocess(truth_text, stopword_set)
        if not truth_tokens:
            raise EvaluationError(
                f"pair {index}: ground truth has no tokens after preprocessing"
            )
        generated_tokens = preprocess(generated_text, stopword_set)
        results.append(match_words(generated_tokens, truth_tokens, store, threshold))
    mean = sum(r.percentage for r in results) / len(results)
    return results, mean
