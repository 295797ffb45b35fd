import io
from pathlib import Path

import pytest
from PIL import Image

from framewatch.config import PipelineConfig
from framewatch.corpus import FrameDescription, IncidentRecord, RunStore, format_timestamp
from framewatch.evaluation import load_embeddings
from framewatch.gate import Detection, MockDetector
from framewatch.ingest import FrameSample, ImagePayload
from framewatch.providers import MockProvider

FIXTURES = Path(__file__).parent / "fixtures"
EMBEDDINGS_PATH = FIXTURES / "embeddings_small.txt"
STUB_DETECTOR = FIXTURES / "stub_detector.py"

# Seven-row key-incident table used across corpus/report/UI tests
# (frame -> information, timestamps at 1 fps).
KEY_INCIDENT_ROWS = [
    (2, "Shows the general traffic conditions during the day"),
    (10, "Shows the traffic situation on the road, with various types of vehicles"),
    (15, "Shows a motorcycle accident"),
    (18, "Shows a motorcycle rider who has lost control of his bike"),
    (20, "Shows a motorcycle rider who has been knocked off his bike by a car."),
    (23, "Shows a motorcycle rider who has been injured in a collision with a car."),
    (27, "Shows a road with blue and white lines, surrounded by trees and buildings."),
]
KEY_INCIDENT_FRAMES = [frame for frame, _ in KEY_INCIDENT_ROWS]
TRAFFIC_SUMMARY = (
    "The video shows a busy road with various types of vehicles, including cars, "
    "motorcycles, auto-rickshaws, and buses. There is heavy traffic, and the vehicles "
    "are driving in both directions. The road is lined with trees and buildings. "
    "The video also includes footage of a motorcycle accident."
)

# Six accident frames with detailed descriptions, used by query tests.
ACCIDENT_ROWS = [
    (14, "A motorcycle accident is shown in this frame. A motorcyclist is lying on the ground, injured. A car is stopped next to him."),
    (15, "A motorcyclist has fallen off his bike and is lying in the middle of the road. A white van swerves to avoid hitting him."),
    (17, "A motorcycle rider has lost control of his bike and fallen to the ground. The van driver loses control and crashes into a tree."),
    (20, "This frame depicts a motorcycle accident on a busy road. A man is running towards the fallen rider to help."),
    (23, "The image shows a motorcycle rider on a busy road after being knocked off his bike by a car. A passerby is helping him."),
    (24, "The picture shows the aftermath of a motorcycle accident. There is a traffic jam behind the accident."),
]
ACCIDENT_FRAMES = [frame for frame, _ in ACCIDENT_ROWS]


def solid_png(width: int = 8, height: int = 8, color=(120, 40, 200)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


def make_frame(n: int, rate: float = 1.0, width: int = 8, height: int = 8, color=None) -> FrameSample:
    color = color or ((n * 37) % 256, (n * 59) % 256, (n * 83) % 256)
    return FrameSample(n, n / rate, ImagePayload(solid_png(width, height, color), "image/png"))


def write_frames_dir(path: Path, count: int = 29, width: int = 8, height: int = 8) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        (path / f"{i:03d}.png").write_bytes(
            solid_png(width, height, ((i * 37) % 256, (i * 59) % 256, (i * 83) % 256))
        )
    return path


def frame_lines(rows) -> str:
    return "\n".join(f"FRAME {n}: {text}" for n, text in rows)


def detector_for_frames(frames) -> MockDetector:
    detection = Detection("person", 0.9, (1.0, 1.0, 7.0, 7.0))
    return MockDetector({f: [detection] for f in frames})


def detector_all() -> MockDetector:
    return MockDetector(default=[Detection("person", 0.9, (1.0, 1.0, 7.0, 7.0))])


def provider_traffic(**overrides) -> MockProvider:
    kwargs = dict(
        responses={str(f): text for f, text in KEY_INCIDENT_ROWS},
        default="Routine traffic, nothing notable.",
        text_rules=[
            {"contains": "give a summary", "text": TRAFFIC_SUMMARY},
            {"contains": "frames containing accidents", "text": frame_lines(ACCIDENT_ROWS)},
        ],
        fixed_latency_s=0.0,
    )
    kwargs.update(overrides)
    return MockProvider(**kwargs)


def build_traffic_run(store: RunStore, run_id: str = "traffic"):
    """Persisted run mirroring the seven-row incident table fixture."""
    cfg = PipelineConfig()
    run = store.create_run(
        run_id, cfg,
        source={"kind": "frame_dir", "path": "fixture"},
        created_at="2026-01-01T00:00:00+00:00",
    )
    with store.open_writer(run_id) as writer:
        for frame, text in KEY_INCIDENT_ROWS:
            store.add_frame_image(
                run_id, frame, ImagePayload(solid_png(color=((frame * 9) % 256, 80, 160)), "image/png")
            )
            writer.append_description(FrameDescription(frame, float(frame), text, 0.0, False))
    run.descriptions = store.read_descriptions(run_id)
    run.summary = TRAFFIC_SUMMARY
    run.incidents = [
        IncidentRecord(format_timestamp(float(f)), f, text) for f, text in KEY_INCIDENT_ROWS
    ]
    store.save_run(run)
    return run


def build_accident_run(store: RunStore, run_id: str = "accident1"):
    """29 described frames, the six accident frames carrying detailed texts."""
    cfg = PipelineConfig()
    run = store.create_run(
        run_id, cfg,
        source={"kind": "frame_dir", "path": "fixture"},
        created_at="2026-01-02T00:00:00+00:00",
    )
    texts = dict(ACCIDENT_ROWS)
    with store.open_writer(run_id) as writer:
        for frame in range(29):
            store.add_frame_image(
                run_id, frame, ImagePayload(solid_png(color=((frame * 7) % 256, 120, 60)), "image/png")
            )
            text = texts.get(frame, f"Normal traffic flow at second {frame}.")
            writer.append_description(FrameDescription(frame, float(frame), text, 0.0, False))
    run.descriptions = store.read_descriptions(run_id)
    run.summary = TRAFFIC_SUMMARY
    store.save_run(run)
    return run


@pytest.fixture
def store(tmp_path) -> RunStore:
    return RunStore(tmp_path / "runs")


@pytest.fixture
def traffic_run(store):
    return build_traffic_run(store)


@pytest.fixture
def accident_run(store):
    return build_accident_run(store)


@pytest.fixture
def frames_dir_29(tmp_path) -> Path:
    return write_frames_dir(tmp_path / "frames29")


@pytest.fixture(scope="session")
def small_embeddings():
    return load_embeddings(EMBEDDINGS_PATH)


@pytest.fixture(scope="session")
def small_vectors() -> dict:
    vectors = {}
    for line in EMBEDDINGS_PATH.read_text().splitlines():
        word, *components = line.split()
        vectors[word] = tuple(float(c) for c in components)
    return vectors
