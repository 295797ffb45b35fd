"""Detection gating: decide per frame whether it is worth a vision-provider call.

Three interchangeable detector backends keep the pipeline testable offline:
a deterministic fixture-driven mock, an external detector executable
(one image path in, JSON detections on stdout), and a remote HTTP detector.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import requests
from PIL import Image

from .config import PipelineConfig
from .errors import DetectorError
from .ingest import FrameSample, ImagePayload

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Detection:
    """One detector hit: class label, confidence, pixel bbox (x1, y1, x2, y2)."""

    label: str
    confidence: float
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DetectorError(f"confidence must be in [0, 1], got {self.confidence}")
        x_min, y_min, x_max, y_max = self.bbox
        if not (x_min < x_max and y_min < y_max):
            raise DetectorError(f"bbox must satisfy x_min < x_max and y_min < y_max, got {self.bbox}")


@dataclass(frozen=True)
class GateDecision:
    """Outcome of the gate for one frame; passed iff any target detection survived."""

    frame_number: int
    passed: bool
    detections: tuple[Detection, ...]


class DetectorBackend(Protocol):
    def detect(self, frame: FrameSample) -> list[Detection]: ...


class MockDetector:
    """Fixture-driven detector; immutable after construction, safe under threads.

    Fixture JSON shape::

        {"frames": {"5": [{"label": "person", "confidence": 0.9, "bbox": [0, 0, 4, 4]}]},
         "default": []}
    """

    def __init__(
        self,
        frames: Mapping[int, Sequence[Detection]] | None = None,
        default: Sequence[Detection] = (),
    ):
        self._frames = {int(k): tuple(v) for k, v in (frames or {}).items()}
        self._default = tuple(default)

    @classmethod
    def from_fixture(cls, path: str | Path) -> "MockDetector":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DetectorError(f"cannot load detector fixture {path}: {exc}") from exc
        frames = {
            int(num): [_detection_from_dict(d, path) for d in dets]
            for num, dets in payload.get("frames", {}).items()
        }
        default = [_detection_from_dict(d, path) for d in payload.get("default", [])]
        return cls(frames, default)

    def detect(self, frame: FrameSample) -> list[Detection]:
        return list(self._frames.get(frame.frame_number, self._default))


class ProcessDetector:
    """Runs a detector executable per frame: ``<command...> <image-path>``.

    The executable must print a JSON list of detections on stdout:
    ``[{"label": str, "confidence": float, "bbox": [x1, y1, x2, y2]}, ...]``.
    """

    def __init__(self, command: Sequence[str]):
        if not command:
            raise DetectorError("process detector needs a non-empty command")
        self._command = list(command)

    def detect(self, frame: FrameSample) -> list[Detection]:
        suffix = {"image/png": ".png", "image/jpeg": ".jpg"}.get(frame.image.media_type, ".png")
        with tempfile.NamedTemporaryFile(suffix=suffix, delete=True) as tmp:
            tmp.write(frame.image.data)
            tmp.flush()
            try:
                result = subprocess.run(
                    [*self._command, tmp.name], capture_output=True, text=True, timeout=120
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise DetectorError(f"detector process unavailable: {exc}") from exc
        if result.returncode != 0:
            raise DetectorError(
                f"detector process exited {result.returncode}: {result.stderr.strip()[-500:]}"
            )
        return _parse_detection_list(result.stdout, source=" ".join(self._command))


class HttpDetector:
    """Remote detector: POST the image, get a JSON detection list back."""

    def __init__(self, url: str, timeout_s: float = 60.0):
        self._url = url
        self._timeout_s = timeout_s
        self._session = requests.Session()

    def detect(self, frame: FrameSample) -> list[Detection]:
        body = {
            "image": {
                "media_type": frame.image.media_type,
                "data": base64.b64encode(frame.image.data).decode("ascii"),
            }
        }
        try:
            response = self._session.post(self._url, json=body, timeout=self._timeout_s)
        except requests.RequestException as exc:
            raise DetectorError(f"detector backend unreachable: {exc}") from exc
        if response.status_code != 200:
            raise DetectorError(f"detector backend returned HTTP {response.status_code}")
        try:
            detections = response.json()["detections"]
        except (ValueError, KeyError) as exc:
            raise DetectorError(f"malformed detector response: {exc}") from exc
        return _parse_detection_list(json.dumps(detections), source=self._url)


def make_detector(spec: str) -> DetectorBackend:
    """Build a backend from a spec string.

    ``mock`` (empty), ``mock:FIXTURE.json``, ``process:CMD ARGS...``, ``http:URL``.
    """
    kind, _, rest = spec.partition(":")
    if kind == "mock":
        return MockDetector.from_fixture(rest) if rest else MockDetector()
    if kind == "process":
        return ProcessDetector(shlex.split(rest))
    if kind == "http":
        return HttpDetector(rest)
    raise DetectorError(f"unknown detector spec {spec!r} (expected mock[:path], process:cmd, http:url)")


def apply_gate(
    detections: Sequence[Detection], cfg: PipelineConfig, frame_number: int
) -> GateDecision:
    """Keep detections matching a target label at/above the confidence floor.

    The comparison is inclusive (>=); the frame passes iff any detection survives.
    """
    kept = tuple(
        d for d in detections
        if d.label in cfg.target_labels and d.confidence >= cfg.gate_confidence
    )
    return GateDecision(frame_number=frame_number, passed=bool(kept), detections=kept)


def crop(frame: FrameSample, det: Detection, margin_frac: float = 0.0) -> ImagePayload:
    """Cut the detection bbox out of the frame, expanded by margin_frac per side.

    The margin is relative to the bbox's own width/height and the result is
    clamped to the image bounds. Returns a PNG payload.
    """
    if margin_frac < 0:
        raise ValueError(f"margin_frac must be >= 0, got {margin_frac}")
    x_min, y_min, x_max, y_max = det.bbox
    if x_max - x_min <= 0 or y_max - y_min <= 0:
        raise ValueError(f"degenerate bbox {det.bbox}")
    image = Image.open(io.BytesIO(frame.image.data))
    dx = margin_frac * (x_max - x_min)
    dy = margin_frac * (y_max - y_min)
    left = max(0, int(round(x_min - dx)))
    top = max(0, int(round(y_min - dy)))
    right = min(image.width, int(round(x_max + dx)))
    bottom = min(image.height, int(round(y_max + dy)))
    if right <= left or bottom <= top:
        raise ValueError(f"bbox {det.bbox} lies outside the {image.width}x{image.height} image")
    region = image.crop((left, top, right, bottom))
    buf = io.BytesIO()
    region.save(buf, format="PNG")
    return ImagePayload(buf.getvalue(), "image/png")


def _detection_from_dict(data: Mapping, source) -> Detection:
    try:
        return Detection(
            label=str(data["label"]),
            confidence=float(data["confidence"]),
            bbox=tuple(float(v) for v in data["bbox"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DetectorError(f"malformed detection record from {source}: {data!r} ({exc})") from exc


def _parse_detection_list(text: str, source: str) -> list[Detection]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DetectorError(f"detector output from {source} is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise DetectorError(f"detector output from {source} must be a JSON list")
    return [_detection_from_dict(d, source) for d in payload]
