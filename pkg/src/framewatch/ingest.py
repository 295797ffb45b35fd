"""Frame ingestion: turn a video or an image directory into ordered FrameSamples.

Video decoding is delegated to an external decoder process so the library
itself never links a media stack. Two decoder backends speak the same
contract (emit ``%06d.png`` stills into a directory, report duration/fps):

* ``ffmpeg`` (default when on PATH), invoked exactly as::

      ffmpeg -hide_banner -loglevel error -i SOURCE -vf fps=RATE -start_number 0 OUTDIR/%06d.png

* the bundled OpenCV script (``pip install framewatch[video]``), invoked as::

      python -m framewatch.opencv_decoder extract SOURCE RATE OUTDIR

Sampling convention: sample i carries timestamp ``i / frame_rate`` starting
at t=0, and its image is the native frame nearest that timestamp.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import DecoderError, IngestError

logger = logging.getLogger(__name__)

MEDIA_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".bmp": "image/bmp",
    ".webp": "image/webp",
}

_FFMPEG_DURATION_RE = re.compile(r"Duration:\s*(\d+):(\d\d):(\d\d(?:\.\d+)?)")
_FFMPEG_FPS_RE = re.compile(r"(\d+(?:\.\d+)?)\s*fps")


@dataclass(frozen=True)
class ImagePayload:
    """Encoded raster bytes plus their media type."""

    data: bytes
    media_type: str


@dataclass(frozen=True)
class FrameSample:
    """One sampled frame: 0-based position, video-time seconds, image payload."""

    frame_number: int
    timestamp_s: float
    image: ImagePayload


@dataclass(frozen=True)
class VideoInfo:
    duration_s: float
    native_fps: float


def resolve_decoder(decoder: str = "auto") -> str:
    """Pick the decoder backend: explicit 'ffmpeg'/'opencv', or auto-detect."""
    if decoder == "auto":
        return "ffmpeg" if shutil.which("ffmpeg") else "opencv"
    if decoder not in ("ffmpeg", "opencv"):
        raise DecoderError(f"unknown decoder backend {decoder!r} (expected ffmpeg, opencv, or auto)")
    return decoder


def probe_video(source: str | Path, decoder: str = "auto") -> VideoInfo:
    """Report duration and native frame rate of a video via the external decoder."""
    source = Path(source)
    if not source.is_file():
        raise IngestError(f"video source not found: {source}")
    backend = resolve_decoder(decoder)
    if backend == "ffmpeg":
        return _probe_ffmpeg(source)
    return _probe_opencv(source)


def sample_video(
    source: str | Path,
    frame_rate: float,
    work_dir: str | Path | None = None,
    decoder: str = "auto",
) -> list[FrameSample]:
    """Sample a video at ``frame_rate`` frames per second of video time.

    Emits floor(duration * rate) or floor(duration * rate) + 1 samples,
    ordered, with timestamps i / rate. Raises if the source cannot be
    decoded or the requested rate exceeds the native rate.
    """
    source = Path(source)
    if frame_rate <= 0:
        raise IngestError(f"frame_rate must be positive, got {frame_rate}")
    if not source.is_file():
        raise IngestError(f"video source not found: {source}")
    backend = resolve_decoder(decoder)
    info = probe_video(source, backend)
    if frame_rate > info.native_fps + 1e-9:
        raise IngestError(
            f"frame_rate {frame_rate} exceeds native rate {info.native_fps:g} of {source.name}; "
            "refusing to duplicate frames"
        )

    if work_dir is None:
        with tempfile.TemporaryDirectory(prefix="framewatch-") as tmp:
            return _extract(source, frame_rate, Path(tmp), backend)
    out_dir = Path(work_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return _extract(source, frame_rate, out_dir, backend)


def load_image_sequence(directory: str | Path, frame_rate: float) -> list[FrameSample]:
    """Load pre-extracted stills named with zero-padded integer stems.

    Files are ordered by numeric stem and renumbered densely to frames 0..n-1
    (a gap in the stems logs a warning); timestamps are i / frame_rate.
    """
    directory = Path(directory)
    if frame_rate <= 0:
        raise IngestError(f"frame_rate must be positive, got {frame_rate}")
    if not directory.is_dir():
        raise IngestError(f"image directory not found: {directory}")

    entries: list[tuple[int, Path]] = []
    for path in sorted(directory.iterdir()):
        if path.name.startswith(".") or not path.is_file():
            continue
        if path.suffix.lower() not in MEDIA_TYPES:
            raise IngestError(f"{path.name}: not a recognized raster extension")
        if not path.stem.isdigit():
            raise IngestError(f"{path.name}: filename stem is not a zero-padded integer")
        entries.append((int(path.stem), path))
    if not entries:
        raise IngestError(f"no image files in {directory}")

    entries.sort(key=lambda e: e[0])
    stems = [stem for stem, _ in entries]
    if stems != list(range(stems[0], stems[0] + len(stems))):
        logger.warning(
            "image sequence %s has gaps in numeric stems (%d..%d over %d files); renumbering densely",
            directory, stems[0], stems[-1], len(stems),
        )

    samples = []
    for i, (_, path) in enumerate(entries):
        payload = ImagePayload(path.read_bytes(), MEDIA_TYPES[path.suffix.lower()])
        samples.append(FrameSample(i, i / frame_rate, payload))
    return samples


def _extract(source: Path, frame_rate: float, out_dir: Path, backend: str) -> list[FrameSample]:
    if backend == "ffmpeg":
        cmd = [
            "ffmpeg", "-hide_banner", "-loglevel", "error",
            "-i", str(source),
            "-vf", f"fps={frame_rate}",
            "-start_number", "0",
            str(out_dir / "%06d.png"),
        ]
    else:
        cmd = [
            sys.executable, "-m", "framewatch.opencv_decoder",
            "extract", str(source), str(frame_rate), str(out_dir),
        ]
    result = subprocess.run(cmd, capture_output=True, text=True)
    if result.returncode != 0:
        raise DecoderError(
            f"decoder exited with status {result.returncode} for {source.name}: "
            f"{result.stderr.strip()[-500:]}"
        )
    stills = sorted(out_dir.glob("*.png"), key=lambda p: int(p.stem))
    if not stills:
        raise DecoderError(f"decoder emitted no frames for {source.name}")
    return [
        FrameSample(i, i / frame_rate, ImagePayload(path.read_bytes(), "image/png"))
        for i, path in enumerate(stills)
    ]


def _probe_ffmpeg(source: Path) -> VideoInfo:
    if shutil.which("ffprobe"):
        cmd = [
            "ffprobe", "-v", "error", "-select_streams", "v:0",
            "-show_entries", "format=duration", "-show_entries", "stream=avg_frame_rate",
            "-of", "json", str(source),
        ]
        result = subprocess.run(cmd, capture_output=True, text=True)
        if result.returncode != 0:
            raise DecoderError(f"ffprobe failed for {source.name}: {result.stderr.strip()[-500:]}")
        try:
            payload = json.loads(result.stdout)
            duration = float(payload["format"]["duration"])
            num, _, den = payload["streams"][0]["avg_frame_rate"].partition("/")
            fps = float(num) / float(den or 1)
        except (KeyError, IndexError, ValueError, json.JSONDecodeError) as exc:
            raise DecoderError(f"could not parse ffprobe output for {source.name}: {exc}") from exc
        return VideoInfo(duration, fps)

    # No ffprobe: scrape the banner ffmpeg prints on stderr.
    result = subprocess.run(["ffmpeg", "-i", str(source)], capture_output=True, text=True)
    duration_match = _FFMPEG_DURATION_RE.search(result.stderr)
    fps_match = _FFMPEG_FPS_RE.search(result.stderr)
    if not duration_match or not fps_match:
        raise DecoderError(f"could not probe {source.name} via ffmpeg banner output")
    hours, minutes, seconds = duration_match.groups()
    duration = int(hours) * 3600 + int(minutes) * 60 + float(seconds)
    return VideoInfo(duration, float(fps_match.group(1)))


def _probe_opencv(source: Path) -> VideoInfo:
    cmd = [sys.executable, "-m", "framewatch.opencv_decoder", "probe", str(source)]
    result = subprocess.run(cmd, capture_output=True, text=True)
    if result.returncode != 0:
        raise DecoderError(f"decoder probe failed for {source.name}: {result.stderr.strip()[-500:]}")
    try:
        payload = json.loads(result.stdout)
        return VideoInfo(float(payload["duration_s"]), float(payload["fps"]))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DecoderError(f"could not parse decoder probe output for {source.name}: {exc}") from exc
