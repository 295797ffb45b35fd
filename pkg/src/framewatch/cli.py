"""Command-line entry point: analyze, query, evaluate, report, serve."""

from __future__ import annotations

import csv
import json
import logging
import sys
import tempfile
from pathlib import Path

import click

from .config import PipelineConfig, load_config
from .corpus import RunStore, build_paragraph
from .errors import FramewatchError
from .evaluation import (
    DEFAULT_THRESHOLD,
    load_embeddings,
    load_stopwords,
    preprocess,
    score_batch,
)
from .gate import make_detector
from .ingest import load_image_sequence, sample_video
from .pipeline import run_analysis
from .providers import make_provider
from .report import ReportFormat, render_report
from .summarize import query_incidents

logger = logging.getLogger(__name__)


def _fail(exc: Exception) -> None:
    stage = getattr(exc, "stage", None)
    prefix = f"{stage} stage: " if stage else ""
    raise click.ClickException(f"{prefix}{exc}")


def _load_cfg(config_path: str | None) -> PipelineConfig:
    return load_config(config_path) if config_path else PipelineConfig()


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool):
    """Detection-gated video analysis and incident querying."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--video", type=click.Path(exists=True, dir_okay=False), help="Video source (decoded externally).")
@click.option("--frames", "frames_dir", type=click.Path(exists=True, file_okay=False), help="Directory of numbered stills.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="YAML pipeline config.")
@click.option("--data-root", default="./runs", show_default=True, help="Run store location.")
@click.option("--run-id", default=None, help="Explicit run id (refused if it already exists).")
@click.option("--detector", default=None, help="Detector spec: mock[:fixture], process:cmd, http:url.")
@click.option("--provider", default=None, help="Provider spec: mock[:fixture], echo, http:url, gemini[:model].")
@click.option("--frame-rate", type=float, default=None, help="Sampling rate in frames per second.")
@click.option("--parallel", type=int, default=None, help="Max concurrent provider calls.")
@click.option("--query", default=None, help="Analyst query (required in direct prompting mode).")
@click.option("--decoder", type=click.Choice(["auto", "ffmpeg", "opencv"]), default="auto", show_default=True)
def analyze(video, frames_dir, config_path, data_root, run_id, detector, provider,
            frame_rate, parallel, query, decoder):
    """Analyze a video or frame directory into a persisted, summarized run."""
    if bool(video) == bool(frames_dir):
        raise click.UsageError("provide exactly one of --video or --frames")
    try:
        cfg = _load_cfg(config_path).with_overrides(
            frame_rate=frame_rate,
            max_parallel_calls=parallel,
            detector_spec=detector,
            provider_spec=provider,
        )
        detector_backend = make_detector(cfg.detector_spec)
        provider_backend = make_provider(cfg.provider_spec, cfg.retry_attempts, cfg.rate_limit_per_s)
        if video:
            with tempfile.TemporaryDirectory(prefix="framewatch-") as tmp:
                samples = sample_video(video, cfg.frame_rate, work_dir=tmp, decoder=decoder)
                run = _run(data_root, cfg, samples, detector_backend, provider_backend,
                           run_id, {"kind": "video", "path": str(video)}, query)
        else:
            samples = load_image_sequence(frames_dir, cfg.frame_rate)
            run = _run(data_root, cfg, samples, detector_backend, provider_backend,
                       run_id, {"kind": "frame_dir", "path": str(frames_dir)}, query)
    except FramewatchError as exc:
        _fail(exc)
        return
    store = RunStore(data_root)
    click.echo(run.run_id)
    report_path = store.run_dir(run.run_id) / "report.md"
    if report_path.exists():
        click.echo(f"report: {report_path}")


def _run(data_root, cfg, samples, detector_backend, provider_backend, run_id, source, query):
    store = RunStore(data_root)
    return run_analysis(
        store, cfg, samples, detector_backend, provider_backend,
        run_id=run_id, source=source, query=query,
    )


@cli.command()
@click.argument("run_id")
@click.argument("query_text")
@click.option("--data-root", default="./runs", show_default=True)
@click.option("--provider", default=None, help="Override the run's provider spec.")
def query(run_id, query_text, data_root, provider):
    """Ask a specific question of a run's description corpus."""
    try:
        store = RunStore(data_root)
        run = store.load_run(run_id)
        paragraph = build_paragraph(run.descriptions)
        if not paragraph:
            raise FramewatchError(f"run {run_id!r} has an empty description corpus")
        cfg = run.config_snapshot
        provider_backend = make_provider(
            provider or cfg.provider_spec, cfg.retry_attempts, cfg.rate_limit_per_s
        )
        result = query_incidents(paragraph, query_text, cfg, provider_backend, run.descriptions)
        store.append_query_artifact(run_id, {
            "query": result.query,
            "raw_text": result.raw_text,
            "parse_warning": result.parse_warning,
            "incidents": [i.to_dict() for i in result.incidents],
        })
    except FramewatchError as exc:
        _fail(exc)
        return
    click.echo("| Timestamp | Frame Number | Information |")
    click.echo("| --- | --- | --- |")
    for incident in result.incidents:
        click.echo(f"| {incident.timestamp} | {incident.frame_number} | {incident.information} |")
    if result.parse_warning:
        click.echo("warning: some provider output did not parse; raw text preserved", err=True)


@cli.command()
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, dir_okay=False),
              help="CSV with 'generated' and 'truth' columns.")
@click.option("--run", "run_id", default=None, help="Score a run's summary instead of a pairs file.")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False),
              help="Ground-truth text file (run mode).")
@click.option("--embeddings", "embeddings_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD, show_default=True)
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True, dir_okay=False),
              help="Override the bundled stopword list.")
@click.option("--data-root", default="./runs", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Write the JSON score report here.")
def evaluate(pairs_path, run_id, truth_path, embeddings_path, threshold, stopwords_path,
             data_root, out_path):
    """Score generated text against ground truth by embedding word matching."""
    if bool(pairs_path) == bool(run_id):
        raise click.UsageError("provide exactly one of --pairs or --run")
    if run_id and not truth_path:
        raise click.UsageError("--run needs --truth")
    try:
        stopwords = load_stopwords(stopwords_path)
        if pairs_path:
            pairs = _read_pairs(pairs_path)
        else:
            run = RunStore(data_root).load_run(run_id)
            if not run.summary:
                raise FramewatchError(f"run {run_id!r} has no summary to score")
            pairs = [(run.summary, Path(truth_path).read_text(encoding="utf-8"))]
        vocabulary = set()
        for index, (generated, truth) in enumerate(pairs):
            truth_tokens = preprocess(truth, stopwords)
            if not truth_tokens:
                raise FramewatchError(
                    f"pair {index}: ground truth has no tokens after preprocessing"
                )
            vocabulary.update(preprocess(generated, stopwords))
            vocabulary.update(truth_tokens)
        store = load_embeddings(embeddings_path, restrict_to=vocabulary)
        results, mean = score_batch(pairs, store, stopwords, threshold)
    except FramewatchError as exc:
        _fail(exc)
        return
    payload = {
        "threshold": threshold,
        "pairs": [
            {
                "matched": r.matched,
                "ground_truth_count": r.ground_truth_count,
                "percentage": r.percentage,
                "pairs": [list(p) for p in r.pairs],
            }
            for r in results
        ],
        "mean_percentage": mean,
    }
    for index, result in enumerate(results):
        click.echo(
            f"pair {index}: {result.matched}/{result.ground_truth_count} "
            f"matched = {result.percentage:.1f}%"
        )
    click.echo(f"mean similarity: {mean:.1f}%")
    if out_path:
        Path(out_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        click.echo(f"scores: {out_path}")


def _read_pairs(path: str) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"generated", "truth"} <= set(reader.fieldnames):
            raise FramewatchError(f"{path}: expected CSV columns 'generated' and 'truth'")
        return [(row["generated"], row["truth"]) for row in reader]


@cli.command("report")
@click.argument("run_id")
@click.option("--format", "fmt", type=click.Choice([f.value for f in ReportFormat]),
              default="markdown", show_default=True)
@click.option("--data-root", default="./runs", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
def report_cmd(run_id, fmt, data_root, out_path):
    """Render a run's report to stdout or a file."""
    try:
        store = RunStore(data_root)
        run = store.load_run(run_id)
        body = render_report(run, fmt, store.list_query_artifacts(run_id))
    except FramewatchError as exc:
        _fail(exc)
        return
    if out_path:
        Path(out_path).write_bytes(body)
        click.echo(f"report: {out_path}")
    else:
        sys.stdout.write(body.decode("utf-8"))


@cli.command()
@click.option("--data-root", default="./runs", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8787, show_default=True)
@click.option("--provider", default=None, help="Override every run's provider spec for queries.")
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None,
              help="Static UI bundle to serve at / (defaults to frontend/dist when present).")
def serve(data_root, host, port, provider, ui_dir):
    """Serve runs, reports, frames, and the query endpoint over HTTP."""
    from .server import serve as _serve

    if not Path(data_root).is_dir():
        raise click.ClickException(f"data root {data_root!r} does not exist")
    if ui_dir is None:
        candidate = Path("frontend/dist")
        ui_dir = candidate if candidate.is_dir() else None
    try:
        provider_backend = make_provider(provider) if provider else None
        _serve(data_root, host=host, port=port, provider=provider_backend, ui_dir=ui_dir)
    except FramewatchError as exc:
        _fail(exc)
    except OSError as exc:
        raise click.ClickException(f"cannot bind {host}:{port}: {exc}")


def main():
    cli()


if __name__ == "__main__":
    main()
