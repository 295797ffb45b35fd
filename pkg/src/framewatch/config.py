"""Pipeline configuration: typed settings, prompt templates, generation parameters.

A ``PipelineConfig`` is loaded once (YAML file, CLI overrides, or defaults),
validated, frozen, and snapshotted into every run so results stay
reproducible. API keys are never part of the config; they come from
environment variables only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .errors import ConfigError, PromptBindingError


class SubmissionMode(str, Enum):
    """How gated frames are handed to the vision provider."""

    PER_FRAME = "per_frame"
    SEQUENCE = "sequence"
    COLLAGE = "collage"


class PromptingMode(str, Enum):
    """Direct embeds the analyst query in every vision prompt; indirect
    describes frames neutrally and queries the accumulated text later."""

    DIRECT = "direct"
    INDIRECT = "indirect"


class HarmCategory(str, Enum):
    HARASSMENT = "harassment"
    HATE_SPEECH = "hate_speech"
    SEXUAL_CONTENT = "sexual_content"
    DANGEROUS_CONTENT = "dangerous_content"


class BlockThreshold(str, Enum):
    BLOCK_NONE = "block_none"
    BLOCK_FEW = "block_few"
    BLOCK_SOME = "block_some"
    BLOCK_MOST = "block_most"


DEFAULT_DESCRIBE_PROMPT = "Describe the image."
DEFAULT_SUMMARIZE_PROMPT = (
    "These are image descriptions of a video. "
    "Understand, remove redundant information and give a summary."
)
DEFAULT_QUERY_PROMPT = (
    "These are frame-wise descriptions of a video. "
    "Understand and describe the frames containing {query}."
)

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def default_safety() -> dict[HarmCategory, BlockThreshold]:
    """Permissive defaults: surveillance footage (accidents, altercations)
    routinely trips provider safety filters, and a silently blocked frame is
    worse for an analyst than a graphic description. Tighten per deployment."""
    return {category: BlockThreshold.BLOCK_NONE for category in HarmCategory}


@dataclass(frozen=True)
class GenerationParams:
    """Provider-side generation knobs applied to every call."""

    temperature: float = 0.0
    safety: Mapping[HarmCategory, BlockThreshold] = field(default_factory=default_safety)
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        missing = [c.value for c in HarmCategory if c not in self.safety]
        if missing:
            raise ConfigError(f"safety map missing harm categories: {', '.join(missing)}")
        if self.max_output_tokens <= 0:
            raise ConfigError(f"max_output_tokens must be positive, got {self.max_output_tokens}")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "safety": {c.value: t.value for c, t in sorted(self.safety.items(), key=lambda kv: kv[0].value)},
            "max_output_tokens": self.max_output_tokens,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GenerationParams":
        if not isinstance(data, Mapping):
            raise ConfigError(f"generation params must be a mapping, got {type(data).__name__}")
        kwargs: dict = {}
        if "temperature" in data:
            kwargs["temperature"] = _as_number(data["temperature"], "temperature")
        if "safety" in data:
            raw = data["safety"]
            if not isinstance(raw, Mapping):
                raise ConfigError("safety must be a mapping of harm category to block threshold")
            safety = default_safety()
            for key, value in raw.items():
                safety[_as_enum(HarmCategory, key, "safety category")] = _as_enum(
                    BlockThreshold, value, "safety threshold"
                )
            kwargs["safety"] = safety
        if "max_output_tokens" in data:
            kwargs["max_output_tokens"] = _as_int(data["max_output_tokens"], "max_output_tokens")
        unknown = set(data) - {"temperature", "safety", "max_output_tokens"}
        if unknown:
            raise ConfigError(f"unknown generation param field(s): {', '.join(sorted(unknown))}")
        return cls(**kwargs)


@dataclass(frozen=True)
class PipelineConfig:
    """Single source of truth for one analysis run. Immutable after load."""

    frame_rate: float = 1.0
    target_labels: frozenset = frozenset({"person"})
    gate_confidence: float = 0.25
    submission_mode: SubmissionMode = SubmissionMode.PER_FRAME
    prompting_mode: PromptingMode = PromptingMode.INDIRECT
    crop_to_detection: bool = False
    crop_margin_frac: float = 0.10
    vision_params: GenerationParams = field(default_factory=GenerationParams)
    text_params: GenerationParams = field(default_factory=GenerationParams)
    describe_prompt: str = DEFAULT_DESCRIBE_PROMPT
    summarize_prompt: str = DEFAULT_SUMMARIZE_PROMPT
    query_prompt: Optional[str] = DEFAULT_QUERY_PROMPT
    max_parallel_calls: int = 4
    detector_spec: str = "mock"
    provider_spec: str = "mock"
    rate_limit_per_s: Optional[float] = None
    retry_attempts: int = 3

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ConfigError(f"frame_rate must be positive, got {self.frame_rate}")
        if not 0.0 <= self.gate_confidence <= 1.0:
            raise ConfigError(f"gate_confidence must be in [0, 1], got {self.gate_confidence}")
        if self.crop_margin_frac < 0:
            raise ConfigError(f"crop_margin_frac must be >= 0, got {self.crop_margin_frac}")
        if self.crop_to_detection and self.submission_mode is not SubmissionMode.PER_FRAME:
            raise ConfigError("crop_to_detection requires submission_mode=per_frame")
        if self.max_parallel_calls <= 0:
            raise ConfigError(f"max_parallel_calls must be positive, got {self.max_parallel_calls}")
        if self.retry_attempts <= 0:
            raise ConfigError(f"retry_attempts must be positive, got {self.retry_attempts}")
        if self.rate_limit_per_s is not None and self.rate_limit_per_s <= 0:
            raise ConfigError(f"rate_limit_per_s must be positive, got {self.rate_limit_per_s}")
        if not self.describe_prompt:
            raise ConfigError("describe_prompt must be non-empty")
        has_query_slot = "{query}" in self.describe_prompt
        if self.prompting_mode is PromptingMode.DIRECT and not has_query_slot:
            raise ConfigError(
                "prompting_mode=direct requires describe_prompt to embed the query "
                "via a {query} placeholder"
            )
        if self.prompting_mode is PromptingMode.INDIRECT:
            if has_query_slot:
                raise ConfigError(
                    "prompting_mode=indirect requires a query-free describe_prompt; "
                    "the query belongs in query_prompt"
                )
            if not self.query_prompt:
                raise ConfigError("prompting_mode=indirect requires a query_prompt")

    def to_dict(self) -> dict:
        return {
            "frame_rate": self.frame_rate,
            "target_labels": sorted(self.target_labels),
            "gate_confidence": self.gate_confidence,
            "submission_mode": self.submission_mode.value,
            "prompting_mode": self.prompting_mode.value,
            "crop_to_detection": self.crop_to_detection,
            "crop_margin_frac": self.crop_margin_frac,
            "vision_params": self.vision_params.to_dict(),
            "text_params": self.text_params.to_dict(),
            "describe_prompt": self.describe_prompt,
            "summarize_prompt": self.summarize_prompt,
            "query_prompt": self.query_prompt,
            "max_parallel_calls": self.max_parallel_calls,
            "detector_spec": self.detector_spec,
            "provider_spec": self.provider_spec,
            "rate_limit_per_s": self.rate_limit_per_s,
            "retry_attempts": self.retry_attempts,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        if data is None:
            data = {}
        if not isinstance(data, Mapping):
            raise ConfigError(f"config document must be a mapping, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        kwargs: dict = {}
        if "frame_rate" in data:
            kwargs["frame_rate"] = _as_number(data["frame_rate"], "frame_rate")
        if "target_labels" in data:
            labels = data["target_labels"]
            if isinstance(labels, str) or not hasattr(labels, "__iter__"):
                raise ConfigError("target_labels must be a list of class labels")
            kwargs["target_labels"] = frozenset(str(l) for l in labels)
        if "gate_confidence" in data:
            kwargs["gate_confidence"] = _as_number(data["gate_confidence"], "gate_confidence")
        if "submission_mode" in data:
            kwargs["submission_mode"] = _as_enum(SubmissionMode, data["submission_mode"], "submission_mode")
        if "prompting_mode" in data:
            kwargs["prompting_mode"] = _as_enum(PromptingMode, data["prompting_mode"], "prompting_mode")
        for name in ("crop_to_detection",):
            if name in data:
                if not isinstance(data[name], bool):
                    raise ConfigError(f"{name} must be a boolean")
                kwargs[name] = data[name]
        if "crop_margin_frac" in data:
            kwargs["crop_margin_frac"] = _as_number(data["crop_margin_frac"], "crop_margin_frac")
        if "vision_params" in data:
            kwargs["vision_params"] = GenerationParams.from_dict(data["vision_params"])
        if "text_params" in data:
            kwargs["text_params"] = GenerationParams.from_dict(data["text_params"])
        for name in ("describe_prompt", "summarize_prompt", "detector_spec", "provider_spec"):
            if name in data:
                if not isinstance(data[name], str):
                    raise ConfigError(f"{name} must be a string")
                kwargs[name] = data[name]
        if "query_prompt" in data:
            value = data["query_prompt"]
            if value is not None and not isinstance(value, str):
                raise ConfigError("query_prompt must be a string or null")
            kwargs["query_prompt"] = value
        if "max_parallel_calls" in data:
            kwargs["max_parallel_calls"] = _as_int(data["max_parallel_calls"], "max_parallel_calls")
        if "retry_attempts" in data:
            kwargs["retry_attempts"] = _as_int(data["retry_attempts"], "retry_attempts")
        if "rate_limit_per_s" in data:
            value = data["rate_limit_per_s"]
            kwargs["rate_limit_per_s"] = None if value is None else _as_number(value, "rate_limit_per_s")
        return cls(**kwargs)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Return a copy with the given fields replaced (CLI flags beat file values)."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides) if overrides else self


def load_config(path: str | Path) -> PipelineConfig:
    """Load and validate a YAML config file. An empty file yields all defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not a well-formed YAML document: {exc}") from exc
    return PipelineConfig.from_dict(data)


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    """Write a config as YAML. ``load_config`` of the result equals ``cfg``."""
    Path(path).write_text(
        yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False),
        encoding="utf-8",
    )


def render_prompt(template: str, bindings: Mapping[str, str]) -> str:
    """Substitute ``{name}`` placeholders verbatim; all other text is untouched.

    Raises ``PromptBindingError`` naming the first placeholder without a binding.
    """

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise PromptBindingError(name)
        return str(bindings[name])

    return _PLACEHOLDER_RE.sub(_sub, template)


def _as_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def _as_enum(enum_cls, value, name: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{name} must be one of [{allowed}], got {value!r}") from None
