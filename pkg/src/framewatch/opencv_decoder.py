"""OpenCV-based frame decoder, run as a subprocess by the ingest module.

Implements the same contract as the documented ffmpeg invocation: ``extract``
writes ``%06d.png`` stills (frame i = native frame nearest t = i/rate) into a
directory, ``probe`` prints ``{"duration_s": ..., "fps": ...}`` as JSON.

Requires opencv-python-headless (the ``framewatch[video]`` extra). The main
library never imports this module in-process.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _open(source: str):
    import cv2

    cap = cv2.VideoCapture(source)
    if not cap.isOpened():
        raise SystemExit(f"cannot open video source: {source}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    if fps <= 0 or frame_count <= 0:
        raise SystemExit(f"source reports invalid fps/frame count: fps={fps} frames={frame_count}")
    return cap, fps, frame_count


def probe(source: str) -> None:
    cap, fps, frame_count = _open(source)
    cap.release()
    json.dump({"duration_s": frame_count / fps, "fps": fps}, sys.stdout)
    sys.stdout.write("\n")


def extract(source: str, rate: float, out_dir: str) -> None:
    import cv2

    if rate <= 0:
        raise SystemExit(f"rate must be positive, got {rate}")
    cap, fps, frame_count = _open(source)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    # Emitted still i is the native frame nearest t = i/rate (half-up).
    targets = []
    i = 0
    while True:
        native_idx = int(i / rate * fps + 0.5)
        if native_idx >= frame_count:
            break
        targets.append(native_idx)
        i += 1

    wanted = iter(targets)
    next_target = next(wanted, None)
    native_idx = 0
    emitted = 0
    while next_target is not None:
        ok, frame = cap.read()
        if not ok:
            break
        if native_idx == next_target:
            if not cv2.imwrite(str(out / f"{emitted:06d}.png"), frame):
                raise SystemExit(f"failed to write frame {emitted}")
            emitted += 1
            next_target = next(wanted, None)
        native_idx += 1
    cap.release()
    if emitted == 0:
        raise SystemExit("no frames emitted")


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="Frame decoder (OpenCV backend)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_probe = sub.add_parser("probe", help="print duration_s and fps as JSON")
    p_probe.add_argument("source")
    p_extract = sub.add_parser("extract", help="emit %%06d.png stills sampled at RATE fps")
    p_extract.add_argument("source")
    p_extract.add_argument("rate", type=float)
    p_extract.add_argument("out_dir")
    args = parser.parse_args(argv)
    if args.command == "probe":
        probe(args.source)
    else:
        extract(args.source, args.rate, args.out_dir)


if __name__ == "__main__":
    main()
