import io
import json
import random
import subprocess
import sys

import pytest
from PIL import Image

from conftest import STUB_DETECTOR, make_frame
from framewatch.config import PipelineConfig
from framewatch.errors import DetectorError
from framewatch.gate import (
    Detection,
    MockDetector,
    ProcessDetector,
    apply_gate,
    crop,
    make_detector,
)
from oracles import expected_crop_rect


def det(label="person", confidence=0.9, bbox=(1.0, 1.0, 7.0, 7.0)) -> Detection:
    return Detection(label, confidence, bbox)


def cfg_with(targets={"person"}, conf=0.5) -> PipelineConfig:
    return PipelineConfig(target_labels=frozenset(targets), gate_confidence=conf)


class TestMockDetector:
    def test_fixture_mapping(self, tmp_path):
        fixture = tmp_path / "det.json"
        fixture.write_text(json.dumps({
            "frames": {"5": [{"label": "person", "confidence": 0.9, "bbox": [0, 0, 4, 4]}]},
            "default": [],
        }))
        backend = MockDetector.from_fixture(fixture)
        assert backend.detect(make_frame(5)) == [det("person", 0.9, (0.0, 0.0, 4.0, 4.0))]

    def test_unmapped_frame_uses_default(self):
        backend = MockDetector({5: [det()]})
        assert backend.detect(make_frame(3)) == []

    def test_malformed_fixture(self, tmp_path):
        fixture = tmp_path / "det.json"
        fixture.write_text('{"frames": {"1": [{"label": "x"}]}}')
        with pytest.raises(DetectorError, match="malformed"):
            MockDetector.from_fixture(fixture)


class TestProcessDetector:
    def test_matches_standalone_run(self, tmp_path):
        # Oracle: invoke the stub executable directly and compare with the
        # backend's parsed result for the same image.
        frame = make_frame(0, width=8, height=8)
        image_path = tmp_path / "frame.png"
        image_path.write_bytes(frame.image.data)
        standalone = json.loads(
            subprocess.run(
                [sys.executable, str(STUB_DETECTOR), str(image_path)],
                capture_output=True, text=True, check=True,
            ).stdout
        )
        backend = ProcessDetector([sys.executable, str(STUB_DETECTOR)])
        result = backend.detect(frame)
        assert len(result) == len(standalone) == 1
        assert result[0].label == standalone[0]["label"] == "person"
        assert result[0].confidence == standalone[0]["confidence"]
        assert list(result[0].bbox) == [float(v) for v in standalone[0]["bbox"]]

    def test_empty_detection_branch(self):
        frame = make_frame(0, width=7, height=8)  # odd width -> no detections
        backend = ProcessDetector([sys.executable, str(STUB_DETECTOR)])
        assert backend.detect(frame) == []

    def test_unavailable_backend(self):
        backend = ProcessDetector(["/nonexistent/detector-binary"])
        with pytest.raises(DetectorError, match="unavailable"):
            backend.detect(make_frame(0))

    def test_malformed_output(self, tmp_path):
        script = tmp_path / "bad.py"
        script.write_text("print('not json')\n")
        backend = ProcessDetector([sys.executable, str(script)])
        with pytest.raises(DetectorError, match="JSON"):
            backend.detect(make_frame(0))


def test_make_detector_specs(tmp_path):
    assert isinstance(make_detector("mock"), MockDetector)
    fixture = tmp_path / "det.json"
    fixture.write_text('{"frames": {}}')
    assert isinstance(make_detector(f"mock:{fixture}"), MockDetector)
    assert isinstance(make_detector("process:python x.py"), ProcessDetector)
    with pytest.raises(DetectorError, match="unknown"):
        make_detector("magic:stuff")


class TestApplyGate:
    def test_target_label_passes(self):
        decision = apply_gate([det("person", 0.9)], cfg_with(), 0)
        assert decision.passed is True
        assert len(decision.detections) == 1

    def test_non_target_label_fails(self):
        decision = apply_gate([det("car", 0.9)], cfg_with(), 0)
        assert decision.passed is False
        assert decision.detections == ()

    def test_threshold_is_inclusive_and_filters(self):
        decision = apply_gate([det(confidence=0.49), det(confidence=0.51)], cfg_with(conf=0.5), 7)
        assert decision.passed is True
        assert len(decision.detections) == 1
        assert decision.detections[0].confidence == 0.51
        boundary = apply_gate([det(confidence=0.5)], cfg_with(conf=0.5), 7)
        assert boundary.passed is True  # >= keeps the exact-threshold hit

    def test_passed_iff_detections_nonempty(self):
        for detections in ([], [det("car")], [det("person", 0.1)], [det("person", 0.9)]):
            decision = apply_gate(detections, cfg_with(conf=0.5), 1)
            assert decision.passed == bool(decision.detections)

    def test_pure_function(self):
        detections = [det("person", 0.7)]
        first = apply_gate(detections, cfg_with(), 3)
        second = apply_gate(detections, cfg_with(), 3)
        assert first == second

    def test_lowering_confidence_never_unpasses(self):
        rng = random.Random(20260811)
        for _ in range(200):
            detections = [
                det(rng.choice(["person", "car", "dog"]), round(rng.random(), 3))
                for _ in range(rng.randrange(4))
            ]
            hi = round(rng.random(), 3)
            lo = round(hi * rng.random(), 3)
            decision_hi = apply_gate(detections, cfg_with(conf=hi), 0)
            decision_lo = apply_gate(detections, cfg_with(conf=lo), 0)
            if decision_hi.passed:
                assert decision_lo.passed


class TestCrop:
    def test_full_image_identity_dimensions(self):
        frame = make_frame(0, width=10, height=6)
        payload = crop(frame, det(bbox=(0.0, 0.0, 10.0, 6.0)), margin_frac=0.0)
        image = Image.open(io.BytesIO(payload.data))
        assert image.size == (10, 6)
        assert payload.media_type == "image/png"

    def test_centered_half_size(self):
        frame = make_frame(0, width=100, height=100)
        payload = crop(frame, det(bbox=(25.0, 25.0, 75.0, 75.0)), margin_frac=0.0)
        assert Image.open(io.BytesIO(payload.data)).size == (50, 50)

    def test_margin_clamped_at_edge_matches_oracle(self):
        frame = make_frame(0, width=40, height=30)
        bbox = (30.0, 2.0, 40.0, 12.0)
        left, top, right, bottom = expected_crop_rect(bbox, 0.1, 40, 30)
        payload = crop(frame, det(bbox=bbox), margin_frac=0.1)
        assert Image.open(io.BytesIO(payload.data)).size == (right - left, bottom - top)

    def test_degenerate_bbox_rejected(self):
        frame = make_frame(0, width=10, height=10)
        with pytest.raises(DetectorError):
            Detection("person", 0.9, (5.0, 5.0, 5.0, 8.0))
        with pytest.raises(ValueError, match="margin"):
            crop(frame, det(), margin_frac=-0.5)
