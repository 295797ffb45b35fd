"""Vision/text provider clients: request building, retries, rate limiting, latency.

Three backends behind one interface: a fixture-driven mock (offline tests and
dry runs), a generic HTTP/JSON sidecar (contract in the README), and the
Gemini REST API. Safety-blocked responses are data, not errors: the pipeline
must keep looping past a blocked frame.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import requests
from PIL import Image, ImageDraw

from .config import BlockThreshold, GenerationParams, HarmCategory
from .errors import (
    ProviderAuthError,
    ProviderError,
    RetriesExhaustedError,
    TransientProviderError,
)
from .ingest import FrameSample, ImagePayload

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProviderRequest:
    """One provider call. For multi-image requests the caller supplies images
    already ordered by source frame number."""

    images: tuple[ImagePayload, ...]
    prompt: str
    params: GenerationParams
    context_key: Optional[str] = None  # routing key for the mock (e.g. frame number)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    latency_s: float
    blocked: bool
    provider_id: str
    attempts: int = 1

    def __post_init__(self):
        if self.blocked and self.text:
            raise ValueError("blocked responses carry no text")
        if self.latency_s < 0:
            raise ValueError("latency_s must be >= 0")


class RateLimiter:
    """Shared token spacing: at most ``max_per_s`` acquisitions per second."""

    def __init__(self, max_per_s: float):
        if max_per_s <= 0:
            raise ValueError("max_per_s must be positive")
        self._interval = 1.0 / max_per_s
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_slot)
            self._next_slot = slot + self._interval
        wait = slot - now
        if wait > 0:
            time.sleep(wait)


class _BaseProvider:
    """Retry/rate-limit/latency plumbing shared by every backend."""

    provider_id = "base"

    def __init__(
        self,
        retry_attempts: int = 3,
        rate_limit_per_s: float | None = None,
        backoff_base_s: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if retry_attempts < 1:
            raise ValueError("retry_attempts must be >= 1")
        self._retry_attempts = retry_attempts
        self._limiter = RateLimiter(rate_limit_per_s) if rate_limit_per_s else None
        self._backoff_base_s = backoff_base_s
        self._sleep = sleep

    def describe(self, request: ProviderRequest) -> ProviderResponse:
        return self._call(lambda: self._describe_once(request))

    def generate_text(self, prompt: str, params: GenerationParams) -> ProviderResponse:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        return self._call(lambda: self._generate_once(prompt, params))

    # Backends implement these; return (text, blocked, forced_latency_or_None).
    def _describe_once(self, request: ProviderRequest):
        raise NotImplementedError

    def _generate_once(self, prompt: str, params: GenerationParams):
        raise NotImplementedError

    def _call(self, op) -> ProviderResponse:
        last_error: Exception | None = None
        for attempt in range(1, self._retry_attempts + 1):
            if self._limiter is not None:
                self._limiter.acquire()
            started = time.perf_counter()
            try:
                text, blocked, forced_latency = op()
            except TransientProviderError as exc:
                last_error = exc
                if attempt == self._retry_attempts:
                    break
                delay = self._backoff_base_s * (2 ** (attempt - 1)) * (1.0 + random.random())
                logger.warning(
                    "%s: transient failure (attempt %d/%d), retrying in %.2fs: %s",
                    self.provider_id, attempt, self._retry_attempts, delay, exc,
                )
                if delay > 0:
                    self._sleep(delay)
                continue
            latency = forced_latency if forced_latency is not None else time.perf_counter() - started
            return ProviderResponse(
                text="" if blocked else text,
                latency_s=latency,
                blocked=blocked,
                provider_id=self.provider_id,
                attempts=attempt,
            )
        raise RetriesExhaustedError(self._retry_attempts, last_error or ProviderError("unknown"))


class MockProvider(_BaseProvider):
    """Deterministic provider for tests and offline runs.

    Fixture JSON shape::

        {"responses": {"15": "Shows a motorcycle accident"},
         "default": "Nothing notable in this frame.",
         "text_rules": [{"contains": "give a summary", "text": "The video shows ..."}],
         "text_default": "OK.",
         "blocked": ["7"],
         "echo": false,
         "fixed_latency_s": 0.0,
         "delay_s": 0.0,
         "fail_first": 0}

    ``responses`` is keyed by the request's ``context_key`` (the pipeline uses
    the frame number, or ``<frame>:<query>`` in direct mode). ``echo`` makes
    both calls return their prompt verbatim. ``fail_first`` raises a transient
    error on the first N calls (retry testing). ``fixed_latency_s`` pins the
    reported latency so run artifacts are byte-stable. Safety settings are
    accepted and ignored.
    """

    provider_id = "mock"

    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        default: str = "Nothing notable in this frame.",
        text_rules: Sequence[Mapping[str, str]] = (),
        text_default: str = "OK.",
        blocked: Sequence[str] = (),
        echo: bool = False,
        fixed_latency_s: float | None = None,
        delay_s: float = 0.0,
        fail_first: int = 0,
        retry_attempts: int = 3,
        rate_limit_per_s: float | None = None,
        backoff_base_s: float = 0.0,
    ):
        super().__init__(retry_attempts, rate_limit_per_s, backoff_base_s)
        self._responses = dict(responses or {})
        self._default = default
        self._text_rules = [dict(rule) for rule in text_rules]
        self._text_default = text_default
        self._blocked = set(blocked)
        self._echo = echo
        self._fixed_latency_s = fixed_latency_s
        self._delay_s = delay_s
        self._lock = threading.Lock()
        self._failures_left = fail_first
        self.describe_calls = 0
        self.generate_calls = 0

    @classmethod
    def from_fixture(cls, path: str | Path, **overrides) -> "MockProvider":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        kwargs = dict(
            responses=payload.get("responses"),
            default=payload.get("default", "Nothing notable in this frame."),
            text_rules=payload.get("text_rules", ()),
            text_default=payload.get("text_default", "OK."),
            blocked=payload.get("blocked", ()),
            echo=payload.get("echo", False),
            fixed_latency_s=payload.get("fixed_latency_s"),
            delay_s=payload.get("delay_s", 0.0),
            fail_first=payload.get("fail_first", 0),
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    @classmethod
    def echo_provider(cls) -> "MockProvider":
        return cls(echo=True, fixed_latency_s=0.0)

    @property
    def calls(self) -> int:
        return self.describe_calls + self.generate_calls

    def _maybe_fail(self) -> None:
        with self._lock:
            if self._failures_left > 0:
                self._failures_left -= 1
                raise TransientProviderError("scripted mock failure")

    def _describe_once(self, request: ProviderRequest):
        with self._lock:
            self.describe_calls += 1
        self._maybe_fail()
        if self._delay_s:
            time.sleep(self._delay_s)
        if request.context_key is not None and request.context_key in self._blocked:
            return "", True, self._fixed_latency_s
        if self._echo:
            return request.prompt, False, self._fixed_latency_s
        if request.context_key is not None and request.context_key in self._responses:
            return self._responses[request.context_key], False, self._fixed_latency_s
        return self._default, False, self._fixed_latency_s

    def _generate_once(self, prompt: str, params: GenerationParams):
        with self._lock:
            self.generate_calls += 1
        self._maybe_fail()
        if self._delay_s:
            time.sleep(self._delay_s)
        if self._echo:
            return prompt, False, self._fixed_latency_s
        for rule in self._text_rules:
            if rule.get("contains", "") in prompt:
                return rule["text"], False, self._fixed_latency_s
        return self._text_default, False, self._fixed_latency_s


class HttpJsonProvider(_BaseProvider):
    """Generic provider sidecar speaking the JSON contract documented in the README.

    ``POST {base_url}/v1/describe`` and ``POST {base_url}/v1/generate``; an
    API key from ``FRAMEWATCH_API_KEY`` is attached as a bearer token when set.
    """

    provider_id = "http"
    api_key_env = "FRAMEWATCH_API_KEY"

    def __init__(self, base_url: str, timeout_s: float = 120.0, **kwargs):
        super().__init__(**kwargs)
        self._base_url = base_url.rstrip("/")
        self._timeout_s = timeout_s
        self._session = requests.Session()
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            self._session.headers["Authorization"] = f"Bearer {api_key}"

    def _describe_once(self, request: ProviderRequest):
        body = {
            "prompt": request.prompt,
            "params": request.params.to_dict(),
            "images": [
                {"media_type": img.media_type, "data": base64.b64encode(img.data).decode("ascii")}
                for img in request.images
            ],
        }
        return self._post("/v1/describe", body)

    def _generate_once(self, prompt: str, params: GenerationParams):
        return self._post("/v1/generate", {"prompt": prompt, "params": params.to_dict()})

    def _post(self, route: str, body: dict):
        try:
            response = self._session.post(self._base_url + route, json=body, timeout=self._timeout_s)
        except requests.RequestException as exc:
            raise TransientProviderError(f"provider unreachable: {exc}") from exc
        if response.status_code in (401, 403):
            raise ProviderAuthError(f"provider rejected credentials (HTTP {response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"provider returned HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProviderError(f"provider returned HTTP {response.status_code}: {response.text[:200]}")
        try:
            payload = response.json()
            return payload["text"], bool(payload.get("blocked", False)), None
        except (ValueError, KeyError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc


_GEMINI_CATEGORY = {
    HarmCategory.HARASSMENT: "HARM_CATEGORY_HARASSMENT",
    HarmCategory.HATE_SPEECH: "HARM_CATEGORY_HATE_SPEECH",
    HarmCategory.SEXUAL_CONTENT: "HARM_CATEGORY_SEXUALLY_EXPLICIT",
    HarmCategory.DANGEROUS_CONTENT: "HARM_CATEGORY_DANGEROUS_CONTENT",
}
_GEMINI_THRESHOLD = {
    BlockThreshold.BLOCK_NONE: "BLOCK_NONE",
    BlockThreshold.BLOCK_FEW: "BLOCK_ONLY_HIGH",
    BlockThreshold.BLOCK_SOME: "BLOCK_MEDIUM_AND_ABOVE",
    BlockThreshold.BLOCK_MOST: "BLOCK_LOW_AND_ABOVE",
}


def gemini_request_body(
    prompt: str, images: Sequence[ImagePayload], params: GenerationParams
) -> dict:
    """Build a generateContent request body (kept separate for testability)."""
    parts: list[dict] = [{"text": prompt}]
    for img in images:
        parts.append(
            {
                "inline_data": {
                    "mime_type": img.media_type,
                    "data": base64.b64encode(img.data).decode("ascii"),
                }
            }
        )
    return {
        "contents": [{"parts": parts}],
        "generationConfig": {
            "temperature": params.temperature,
            "maxOutputTokens": params.max_output_tokens,
        },
        "safetySettings": [
            {"category": _GEMINI_CATEGORY[c], "threshold": _GEMINI_THRESHOLD[t]}
            for c, t in sorted(params.safety.items(), key=lambda kv: kv[0].value)
        ],
    }


def parse_gemini_response(payload: Mapping) -> tuple[str, bool]:
    """Extract (text, blocked) from a generateContent response payload."""
    feedback = payload.get("promptFeedback") or {}
    if feedback.get("blockReason"):
        return "", True
    candidates = payload.get("candidates") or []
    if not candidates:
        return "", True
    top = candidates[0]
    if top.get("finishReason") == "SAFETY":
        return "", True
    parts = (top.get("content") or {}).get("parts") or []
    return "".join(p.get("text", "") for p in parts), False


class GeminiProvider(_BaseProvider):
    """Gemini REST client (generateContent). Key from ``GEMINI_API_KEY``."""

    provider_id = "gemini"
    api_key_env = "GEMINI_API_KEY"

    def __init__(
        self,
        model: str = "gemini-1.5-flash",
        base_url: str = "https://generativelanguage.googleapis.com/v1beta",
        timeout_s: float = 120.0,
        **kwargs,
    ):
        super().__init__(**kwargs)
        api_key = os.environ.get(self.api_key_env) or os.environ.get("GOOGLE_API_KEY")
        if not api_key:
            raise ProviderAuthError(
                f"gemini provider selected but {self.api_key_env} is not set in the environment"
            )
        self._api_key = api_key
        self._model = model
        self._base_url = base_url.rstrip("/")
        self._timeout_s = timeout_s
        self._session = requests.Session()

    def _describe_once(self, request: ProviderRequest):
        body = gemini_request_body(request.prompt, request.images, request.params)
        return self._post(body)

    def _generate_once(self, prompt: str, params: GenerationParams):
        return self._post(gemini_request_body(prompt, (), params))

    def _post(self, body: dict):
        url = f"{self._base_url}/models/{self._model}:generateContent"
        try:
            response = self._session.post(
                url, params={"key": self._api_key}, json=body, timeout=self._timeout_s
            )
        except requests.RequestException as exc:
            raise TransientProviderError(f"provider unreachable: {exc}") from exc
        if response.status_code in (401, 403):
            raise ProviderAuthError(f"gemini rejected credentials (HTTP {response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"gemini returned HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProviderError(f"gemini returned HTTP {response.status_code}: {response.text[:200]}")
        try:
            text, blocked = parse_gemini_response(response.json())
        except ValueError as exc:
            raise ProviderError(f"malformed gemini response: {exc}") from exc
        return text, blocked, None


def make_provider(
    spec: str,
    retry_attempts: int = 3,
    rate_limit_per_s: float | None = None,
) -> _BaseProvider:
    """Build a provider from a spec string.

    ``mock`` (canned defaults), ``mock:FIXTURE.json``, ``echo``,
    ``http:BASE_URL``, ``gemini`` or ``gemini:MODEL``.
    """
    kind, _, rest = spec.partition(":")
    common = dict(retry_attempts=retry_attempts, rate_limit_per_s=rate_limit_per_s)
    if kind == "mock":
        if rest:
            return MockProvider.from_fixture(rest, **common)
        return MockProvider(**common)
    if kind == "echo":
        return MockProvider(echo=True, fixed_latency_s=0.0, **common)
    if kind == "http":
        return HttpJsonProvider(rest, **common)
    if kind == "gemini":
        return GeminiProvider(model=rest, **common) if rest else GeminiProvider(**common)
    raise ProviderError(
        f"unknown provider spec {spec!r} (expected mock[:path], echo, http:url, gemini[:model])"
    )


def build_collage(frames: Sequence[FrameSample], columns: int) -> ImagePayload:
    """Tile frames row-major in frame order into one labeled raster.

    All frames must share dimensions; each tile gets its frame number drawn
    in the top-left corner. Trailing tiles in the last row stay blank.
    """
    if not frames:
        raise ValueError("collage needs at least one frame")
    if columns < 1:
        raise ValueError("columns must be >= 1")
    decoded = [Image.open(io.BytesIO(f.image.data)).convert("RGB") for f in frames]
    width, height = decoded[0].size
    for frame, img in zip(frames, decoded):
        if img.size != (width, height):
            raise ValueError(
                f"mixed frame dimensions: frame {frame.frame_number} is "
                f"{img.size[0]}x{img.size[1]}, expected {width}x{height}"
            )
    rows = math.ceil(len(frames) / columns)
    canvas = Image.new("RGB", (columns * width, rows * height), (24, 24, 24))
    draw = ImageDraw.Draw(canvas)
    for idx, (frame, img) in enumerate(zip(frames, decoded)):
        x = (idx % columns) * width
        y = (idx // columns) * height
        canvas.paste(img, (x, y))
        label = str(frame.frame_number)
        bbox = draw.textbbox((x + 3, y + 2), label)
        draw.rectangle((bbox[0] - 2, bbox[1] - 1, bbox[2] + 2, bbox[3] + 1), fill=(0, 0, 0))
        draw.text((x + 3, y + 2), label, fill=(255, 255, 255))
    buf = io.BytesIO()
    canvas.save(buf, format="PNG")
    return ImagePayload(buf.getvalue(), "image/png")
