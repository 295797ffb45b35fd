"""Acceptance suite: one test per release criterion, a printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines.
"""

import json
import math
import random
import time
from contextlib import contextmanager

import pytest

from conftest import (
    KEY_INCIDENT_FRAMES,
    ACCIDENT_ROWS,
    detector_all,
    detector_for_frames,
    frame_lines,
    make_frame,
    provider_traffic,
    write_frames_dir,
)
from framewatch.config import PipelineConfig
from framewatch.corpus import FrameDescription, RunStore
from framewatch.errors import CorruptRecordError
from framewatch.evaluation import (
    EmbeddingStore,
    Stage,
    TimingStats,
    cosine,
    match_words,
    record_latency,
)
from framewatch.gate import MockDetector
from framewatch.ingest import load_image_sequence, sample_video
from framewatch.pipeline import run_analysis
from framewatch.providers import MockProvider
from framewatch.report import INCIDENT_COLUMNS, ReportFormat, render_report
from framewatch.summarize import query_incidents, render_frame_lines
from oracles import max_one_to_one_matches


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_eq1_exactness_against_bruteforce_oracle(small_embeddings, small_vectors):
    with criterion("eq1-exactness"):
        started = time.perf_counter()
        fixtures = [
            # (generated, truth) hand-built so greedy and optimal agree
            (["car", "street", "crash", "person", "banana", "road", "vehicle", "auto"],
             ["vehicle", "road", "accident", "person", "zebra", "banana"]),
            (["car", "road", "person"], ["car", "road", "person"]),
            (["car", "road"], ["person", "banana"]),
            (["vehicle"], ["car", "auto"]),
            (["crash", "auto"], ["accident", "vehicle"]),
        ]
        for generated, truth in fixtures:
            oracle_m = max_one_to_one_matches(generated, truth, small_vectors, 0.6)
            result = match_words(generated, truth, small_embeddings, 0.6)
            assert result.matched == oracle_m
            assert result.percentage == 100.0 * oracle_m / len(truth)  # exact equality
        assert time.perf_counter() - started < 1.0


def test_threshold_is_strictly_greater_than():
    with criterion("threshold-semantics"):
        # cosine((1,0,0,0), (3,4,0,0)) is exactly 0.6 in float arithmetic
        store = EmbeddingStore({"a": [1.0, 0.0, 0.0, 0.0], "b": [3.0, 4.0, 0.0, 0.0]})
        assert cosine([1.0, 0.0, 0.0, 0.0], [3.0, 4.0, 0.0, 0.0]) == 0.6
        at_threshold = match_words(["b"], ["a"], store, 0.6)
        assert at_threshold.matched == 0

        x = 0.6 + 1e-6
        store_above = EmbeddingStore(
            {"a": [1.0, 0.0, 0.0, 0.0], "b": [x, math.sqrt(1.0 - x * x), 0.0, 0.0]}
        )
        assert cosine([1.0, 0.0, 0.0, 0.0], [x, math.sqrt(1.0 - x * x), 0.0, 0.0]) > 0.6
        above_threshold = match_words(["b"], ["a"], store_above, 0.6)
        assert above_threshold.matched == 1


def test_bounds_and_monotonicity_randomized():
    with criterion("bounds-and-monotonicity"):
        started = time.perf_counter()
        rng = random.Random(20260811)
        vocabulary = [f"w{i}" for i in range(6)]
        cases = 0
        while cases < 1000:
            vectors = {}
            for word in vocabulary:
                vector = [rng.randint(-3, 3) for _ in range(4)]
                if not any(vector):
                    vector[rng.randrange(4)] = 1
                vectors[word] = vector
            store = EmbeddingStore(vectors)
            pool = vocabulary + ["oov1", "oov2"]
            generated = [rng.choice(pool) for _ in range(rng.randint(0, 5))]
            truth = [rng.choice(pool) for _ in range(rng.randint(1, 5))]
            lo = rng.uniform(0.05, 0.85)
            hi = rng.uniform(lo + 1e-6, 0.99)
            result_lo = match_words(generated, truth, store, lo)
            result_hi = match_words(generated, truth, store, hi)
            for result in (result_lo, result_hi):
                assert 0 <= result.matched <= result.ground_truth_count
                assert 0.0 <= result.percentage <= 100.0
            assert result_hi.matched <= result_lo.matched  # M non-increasing in threshold
            cases += 1
        assert cases >= 1000
        assert time.perf_counter() - started < 10.0


def test_gating_economy_calls_equal_gated_frames(tmp_path):
    with criterion("gating-economy"):
        frames = load_image_sequence(write_frames_dir(tmp_path / "frames"), 1.0)
        assert len(frames) == 29
        scenarios = (
            ("k0", MockDetector(), 0),
            ("k7", detector_for_frames(KEY_INCIDENT_FRAMES), 7),
            ("k29", detector_all(), 29),
        )
        for run_id, detector, k in scenarios:
            store = RunStore(tmp_path / f"runs-{run_id}")
            provider = provider_traffic()
            run_analysis(store, PipelineConfig(), frames, detector, provider, run_id=run_id)
            assert provider.describe_calls == k


def _normalized_report(path) -> bytes:
    payload = json.loads(path.read_text())
    payload["created_at"] = "X"
    payload["run_id"] = "X"
    return json.dumps(payload, sort_keys=True).encode()


def test_end_to_end_determinism_across_three_runs(tmp_path):
    with criterion("end-to-end-determinism"):
        frames_dir = write_frames_dir(tmp_path / "frames")
        cfg = PipelineConfig(max_parallel_calls=4)
        logs, reports = [], []
        for i in range(3):
            store = RunStore(tmp_path / f"root{i}")
            frames = load_image_sequence(frames_dir, cfg.frame_rate)
            run_analysis(
                store, cfg, frames, detector_for_frames(KEY_INCIDENT_FRAMES), provider_traffic(),
                run_id="det-run",
            )
            logs.append((store.run_dir("det-run") / "descriptions.jsonl").read_bytes())
            reports.append(_normalized_report(store.run_dir("det-run") / "report.json"))
        assert logs[0] == logs[1] == logs[2]
        assert reports[0] == reports[1] == reports[2]


def test_incident_table_shape(store, traffic_run):
    with criterion("incident-table-shape"):
        body = render_report(traffic_run, ReportFormat.MARKDOWN).decode()
        lines = body.splitlines()
        header = "| " + " | ".join(INCIDENT_COLUMNS) + " |"
        assert INCIDENT_COLUMNS == ("Timestamp", "Frame Number", "Information")
        start = lines.index(header)
        rows = []
        for line in lines[start + 2:]:
            if not line.startswith("| "):
                break
            rows.append(line)
        assert len(rows) == 7
        first_timestamp, first_frame = rows[0].split(" | ")[0:2]
        assert first_timestamp == "| 00:02"
        assert first_frame == "2"


def test_query_grammar_round_trip(accident_run):
    with criterion("query-grammar-round-trip"):
        echo = MockProvider.echo_provider()
        blocks = [frame_lines(ACCIDENT_ROWS)]
        rng = random.Random(11)
        words = ["rider", "car", "swerves", "falls", "collision", "helps", "road"]
        for _ in range(20):
            numbers = sorted(rng.sample(range(29), rng.randint(1, 7)))
            blocks.append(
                "\n".join(
                    f"FRAME {n}: " + " ".join(rng.choices(words, k=rng.randint(1, 5)))
                    for n in numbers
                )
            )
        for block in blocks:
            cfg = PipelineConfig(query_prompt="Find {query} below.\n" + block)
            result = query_incidents(
                "Frame 0 (00:00): context", "accidents", cfg, echo, accident_run.descriptions
            )
            assert render_frame_lines(result.incidents) == block


def test_sampling_contract(tmp_path):
    with criterion("sampling-contract"):
        cv2 = pytest.importorskip("cv2")
        import numpy as np

        clip = tmp_path / "clip29s.avi"
        writer = cv2.VideoWriter(str(clip), cv2.VideoWriter_fourcc(*"MJPG"), 10.0, (64, 48))
        assert writer.isOpened()
        for i in range(290):  # 29 seconds at 10 fps
            writer.write(np.full((48, 64, 3), (i * 7) % 255, np.uint8))
        writer.release()

        samples = sample_video(clip, 1.0, work_dir=tmp_path / "stills")
        assert 29 <= len(samples) <= 30
        assert [s.timestamp_s for s in samples] == [i / 1.0 for i in range(len(samples))]

        sequence = load_image_sequence(write_frames_dir(tmp_path / "frames29"), 1.0)
        assert len(sequence) == 29


def test_timing_stats_match_independent_summation():
    with criterion("timing-stats"):
        rng = random.Random(31337)
        samples = [rng.uniform(0.0, 12.0) for _ in range(1000)]
        stats = TimingStats()
        for value in samples:
            record_latency(stats, Stage.VISION, value)
        stage = stats.stage(Stage.VISION)
        assert abs(stage.mean_s - math.fsum(samples) / len(samples)) < 1e-9
        assert abs(stage.min_s - min(samples)) < 1e-9
        assert abs(stage.max_s - max(samples)) < 1e-9
        assert stage.count == len(samples)


def test_corpus_crash_tolerance(store):
    with criterion("corpus-crash-tolerance"):
        run = store.create_run("crashy", PipelineConfig(), created_at="2026-01-01T00:00:00+00:00")
        with store.open_writer("crashy") as writer:
            for n in (0, 1, 2):
                writer.append_description(FrameDescription(n, float(n), f"frame {n}"))
        log_path = store.run_dir("crashy") / "descriptions.jsonl"
        with log_path.open("a", encoding="utf-8") as handle:
            handle.write('{"frame_number": 3, "timestamp_s": 3.0, "tex')
        with pytest.raises(CorruptRecordError) as err:
            store.read_descriptions("crashy")
        assert err.value.line_number == 4
        assert [d.frame_number for d in err.value.partial_records] == [0, 1, 2]
        assert [d.text for d in err.value.partial_records] == ["frame 0", "frame 1", "frame 2"]
