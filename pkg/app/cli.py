"""
Command-line entry point: ``python -m app.cli <command> ...``

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 remote-client error,
4 validation error. Every command writes its outputs atomically and records
one row in the operation log.
"""

from __future__ import annotations

import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
from pydantic import ValidationError

from app.core import app_config
from app.core.errors import (EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION,
                             DetectorUnavailableError, EmptyInputError,
                             ToolkitError)
from app.core.run_config import load_run_config
from app.schemas.config_schema import RunConfig
from app.schemas.pipeline_schema import PipelineMode
from app.schemas.video_schema import SigmaPolicy
from app.services import (annotation_service, media_io, metrics_service,
                          pipeline_service)
from app.services.anonymizer_service import anonymize_mcadams
from app.services.dsp_service import resample
from app.services.face_detectors import (FaceDetector, FileFaceDetector,
                                         RemoteFaceDetector)
from app.services.inference_clients import (MockLlmClient, MockMllmClient,
                                            RemoteLlmClient,
                                            RemoteMllmClient,
                                            load_transcripts)
from app.services.operation_log import logged
from app.services.video_deid_service import detect_faces, mask_frame

logger = logging.getLogger(__name__)

MODE_CHOICE = click.Choice([m.value for m in PipelineMode])


class ToolkitGroup(click.Group):
    """click.Group that maps every failure onto the documented exit codes."""

    def main(self, *args, standalone_mode: bool = True, **kwargs):
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
            code = rv if isinstance(rv, int) else EXIT_OK
        except click.UsageError as e:
            e.show()
            code = EXIT_USAGE
        except click.FileError as e:
            e.show()
            code = EXIT_IO
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_USAGE
        except ToolkitError as e:
            click.echo(f"error: {e}", err=True)
            code = e.exit_code
        except ValidationError as e:
            click.echo(f"error: {e}", err=True)
            code = EXIT_VALIDATION
        except OSError as e:
            click.echo(f"error: {e}", err=True)
            code = EXIT_IO
        if standalone_mode:
            sys.exit(code)
        return code


def _config(config_file: Optional[Path],
            overrides: Dict[str, Any]) -> RunConfig:
    config = load_run_config(config_file, overrides=overrides)
    logger.info("effective config: %s", json.dumps(config.echo(),
                                                   sort_keys=True))
    return config


config_option = click.option(
    "--config", "config_file", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path),
    help="JSON run configuration (flags and environment take precedence).")
workers_option = click.option(
    "--workers", type=click.IntRange(min=1), default=None,
    help="Worker threads (default: WORKERS or the number of cores).")


@click.group(cls=ToolkitGroup)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def cli(verbose: bool) -> None:
    """Identity-free emotion analysis toolkit."""
    level = logging.DEBUG if verbose else \
        getattr(logging, app_config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# De-identification
@cli.command("anonymize-audio")
@click.argument("input_wav", type=click.Path(exists=True, dir_okay=False,
                                             path_type=Path))
@click.argument("output_wav", type=click.Path(dir_okay=False,
                                              path_type=Path))
@click.option("--lambda", "mcadams_lambda", type=float, default=None,
              help="McAdams coefficient (default 0.8).")
@click.option("--win-ms", type=float, default=None,
              help="Window length in ms (default 20).")
@click.option("--shift-ms", type=float, default=None,
              help="Window shift in ms (default 10).")
@click.option("--lpc-order", type=int, default=None,
              help="LPC order (default 20).")
@click.option("--float-output", is_flag=True,
              help="Write 32-bit float samples instead of 16-bit PCM.")
@config_option
@workers_option
def anonymize_audio(input_wav: Path, output_wav: Path,
                    mcadams_lambda: Optional[float], win_ms: Optional[float],
                    shift_ms: Optional[float], lpc_order: Optional[int],
                    float_output: bool, config_file: Optional[Path],
                    workers: Optional[int]) -> None:
    """McAdams-anonymize INPUT_WAV into OUTPUT_WAV."""
    config = _config(config_file, {
        "anonymization": {
            "mcadams_lambda": mcadams_lambda,
            "frame": {"win_ms": win_ms, "shift_ms": shift_ms,
                      "lpc_order": lpc_order},
        },
        "workers": workers,
    })
    params = config.anonymization
    payload = {"input": str(input_wav), "output": str(output_wav),
               "lambda": params.mcadams_lambda,
               "win_ms": params.frame.win_ms,
               "shift_ms": params.frame.shift_ms,
               "lpc_order": params.frame.lpc_order}
    with logged("anonymize-audio", payload) as record:
        audio = media_io.read_wav(input_wav)
        out = anonymize_mcadams(audio, params, workers=config.workers)
        media_io.write_wav(output_wav, out, float_output=float_output)
        record.result = {"samples": len(out),
                         "sample_rate_hz": out.sample_rate_hz}
    click.echo(f"wrote {output_wav} ({len(out)} samples at "
               f"{out.sample_rate_hz} Hz)")


def _copy_bytes(data: bytes, target: Path) -> None:
    with media_io.atomic_write(target) as handle:
        handle.write(data)


@cli.command("mask-frames")
@click.argument("frames_dir", type=click.Path(exists=True, file_okay=False,
                                              path_type=Path))
@click.argument("output_dir", type=click.Path(file_okay=False,
                                              path_type=Path))
@click.option("--boxes", "boxes_file",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON Lines box sidecar {frame_index, x, y, w, h}.")
@click.option("--detector-url", default=None,
              help="Remote face detector endpoint.")
@click.option("--sigma-policy", default=None,
              help="'proportional[:factor]' (default) or 'fixed:<sigma>'.")
@config_option
@workers_option
def mask_frames_cmd(frames_dir: Path, output_dir: Path,
                    boxes_file: Optional[Path], detector_url: Optional[str],
                    sigma_policy: Optional[str], config_file: Optional[Path],
                    workers: Optional[int]) -> None:
    """Blur faces in every PPM frame of FRAMES_DIR into OUTPUT_DIR."""
    config = _config(config_file, {
        "sigma_policy": sigma_policy,
        "clients": {"detector_endpoint": detector_url},
        "workers": workers,
    })
    endpoint = config.clients.detector_endpoint
    if boxes_file is not None and detector_url is not None:
        raise click.UsageError("use either --boxes or --detector-url")
    if boxes_file is None and endpoint is None:
        raise click.UsageError("one of --boxes or --detector-url is needed")
    policy = SigmaPolicy.parse(config.sigma_policy)
    frames = media_io.list_frames(frames_dir)
    if frames_dir.resolve() == output_dir.resolve():
        raise click.UsageError("output_dir must differ from frames_dir")

    payload = {"frames_dir": str(frames_dir), "output_dir": str(output_dir),
               "boxes": str(boxes_file) if boxes_file else None,
               "detector": endpoint if boxes_file is None else None,
               "sigma_policy": config.sigma_policy,
               "frames": len(frames)}
    with logged("mask-frames", payload) as record:
        detector: FaceDetector
        if boxes_file is not None:
            detector = FileFaceDetector.from_file(boxes_file)
            listed = {index for index, _ in frames}
            for index in sorted(set(detector.frame_indices) - listed):
                logger.warning("boxes reference missing frame %d, skipped",
                               index)
        else:
            token = config.clients.token
            detector = RemoteFaceDetector(
                endpoint,
                token=token.get_secret_value() if token else None,
                timeout_s=config.clients.timeout_s,
                max_attempts=config.clients.max_attempts,
                max_in_flight=config.clients.max_in_flight)

        def one(item: Tuple[int, Path]) -> Tuple[int, int]:
            index, path = item
            data = path.read_bytes()
            frame = media_io.decode_ppm(data)
            boxes = [b for b in detect_faces(frame, detector, index)
                     if b.clip(frame.width, frame.height) is not None]
            target = output_dir / path.name
            if not boxes:
                _copy_bytes(data, target)
            else:
                media_io.write_ppm(target, mask_frame(frame, boxes, policy))
            return index, len(boxes)

        failed: List[int] = []
        blurred = 0
        try:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = [(index, pool.submit(one, (index, path)))
                           for index, path in frames]
                for index, future in futures:
                    try:
                        blurred += future.result()[1]
                    except DetectorUnavailableError as e:
                        logger.error("frame %d: %s", index, e)
                        failed.append(index)
        finally:
            detector.close()
        record.result = {"frames": len(frames) - len(failed),
                         "boxes": blurred, "failed": failed}
        if failed:
            raise DetectorUnavailableError(
                f"face detection failed for {len(failed)} frame(s): "
                f"{', '.join(str(i) for i in failed)}")
    click.echo(f"masked {len(frames)} frames ({blurred} boxes) into "
               f"{output_dir}")


@cli.command("resample-audio")
@click.argument("input_wav", type=click.Path(exists=True, dir_okay=False,
                                             path_type=Path))
@click.argument("output_wav", type=click.Path(dir_okay=False,
                                              path_type=Path))
@click.option("--rate", "target_rate", type=click.IntRange(min=1),
              default=320, show_default=True, help="Target rate in Hz.")
@click.option("--float-output", is_flag=True,
              help="Write 32-bit float samples instead of 16-bit PCM.")
def resample_audio(input_wav: Path, output_wav: Path, target_rate: int,
                   float_output: bool) -> None:
    """Resample INPUT_WAV (e.g. 16 kHz to 320 Hz for the audio baseline)."""
    payload = {"input": str(input_wav), "output": str(output_wav),
               "rate": target_rate}
    with logged("resample-audio", payload) as record:
        audio = media_io.read_wav(input_wav)
        out = resample(audio, target_rate)
        media_io.write_wav(output_wav, out, float_output=float_output)
        record.result = {"source_rate_hz": audio.sample_rate_hz,
                         "samples": len(out)}
    click.echo(f"wrote {output_wav} ({len(out)} samples at {target_rate} Hz)")


# Annotations
@cli.command("stats")
@click.argument("annotations", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path))
@click.option("--csv", "as_csv", is_flag=True,
              help="Print the NFBL histogram as CSV rows.")
@click.option("--json", "as_json", is_flag=True,
              help="Print summary and histograms as JSON.")
def stats(annotations: Path, as_csv: bool, as_json: bool) -> None:
    """Dataset summary and NFBL histogram of ANNOTATIONS."""
    with logged("stats", {"annotations": str(annotations)}) as record:
        records = annotation_service.load_annotations(annotations)
        summary = annotation_service.dataset_summary(records)
        histogram = annotation_service.nfbl_histogram(records)
        categories = annotation_service.nfbl_category_histogram(records)
        record.result = {"videos": summary.video_count,
                         "clips": summary.clip_count}

    if as_json:
        click.echo(json.dumps({
            "summary": summary.model_dump(),
            "histogram": annotation_service.histogram_rows(histogram),
            "categories": categories,
        }, indent=2, sort_keys=True))
    elif as_csv:
        click.echo("class_id,name,category,count")
        for row in annotation_service.histogram_rows(histogram):
            click.echo(f"{row['class_id']},\"{row['name']}\","
                       f"{row['category']},{row['count']}")
    else:
        click.echo(annotation_service.render_summary(summary, histogram),
                   nl=False)
        click.echo("\nNFBL categories")
        for category, count in categories.items():
            click.echo(f"  {category:<20} {count:>6}")


@cli.command("split")
@click.argument("annotations", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path))
@click.argument("output", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None, help="Split seed.")
@click.option("--train-per-class", type=click.IntRange(min=0),
              default=annotation_service.DEFAULT_TRAIN_PER_CLASS,
              show_default=True)
@click.option("--test-per-class", type=click.IntRange(min=0),
              default=annotation_service.DEFAULT_TEST_PER_CLASS,
              show_default=True)
@click.option("--override", type=click.Path(exists=True, dir_okay=False,
                                            path_type=Path),
              help="Explicit split file to validate and copy instead.")
@config_option
def split(annotations: Path, output: Path, seed: Optional[int],
          train_per_class: int, test_per_class: int,
          override: Optional[Path], config_file: Optional[Path]) -> None:
    """Write a class-balanced train/test split of ANNOTATIONS to OUTPUT."""
    config = _config(config_file, {"seed": seed})
    payload = {"annotations": str(annotations), "seed": config.seed,
               "train_per_class": train_per_class,
               "test_per_class": test_per_class,
               "override": str(override) if override else None}
    with logged("split", payload) as record:
        records = annotation_service.load_annotations(annotations)
        if override is not None:
            train, test = annotation_service.apply_split(
                records, annotation_service.load_split(override))
        else:
            train, test = annotation_service.split_dataset(
                records, config.seed, train_per_class, test_per_class)
        result = annotation_service.to_split(train, test)
        with media_io.atomic_write(output, "w") as handle:
            handle.write(result.model_dump_json(indent=2) + "\n")
        record.result = {"train": len(train), "test": len(test)}
    click.echo(f"wrote {output} ({len(train)} train / {len(test)} test)")


@cli.command("synth-annotations")
@click.argument("output", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--videos", type=click.IntRange(min=1), default=275,
              show_default=True)
@click.option("--clips", type=click.IntRange(min=0), default=16180,
              show_default=True)
@click.option("--negatives", type=click.IntRange(min=0), default=74,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def synth_annotations(output: Path, videos: int, clips: int, negatives: int,
                      seed: int) -> None:
    """Write a synthetic annotation document at full-dataset scale."""
    payload = {"videos": videos, "clips": clips, "negatives": negatives,
               "seed": seed}
    with logged("synth-annotations", payload) as record:
        records = annotation_service.synthetic_annotations(
            video_count=videos, clip_count=clips, negative_count=negatives,
            seed=seed)
        with media_io.atomic_write(output, "w") as handle:
            handle.write(annotation_service.serialize_annotations(records))
        record.result = {"videos": len(records)}
    click.echo(f"wrote {output} ({videos} videos, {clips} clips)")


# Pipeline
def _build_clients(config: RunConfig,
                   fixtures: Sequence[Path]
                   ) -> pipeline_service.PipelineClients:
    if fixtures:
        mllm, judge = load_transcripts(list(fixtures))
        return pipeline_service.PipelineClients(MockMllmClient(mllm),
                                                MockLlmClient(judge))
    settings = config.clients
    if not (settings.mllm_endpoint and settings.judge_endpoint):
        raise click.UsageError(
            "give --mock-fixtures or both MLLM and judge endpoints")
    token = settings.token.get_secret_value() if settings.token else None
    options = dict(timeout_s=settings.timeout_s,
                   max_attempts=settings.max_attempts,
                   max_in_flight=settings.max_in_flight)
    return pipeline_service.PipelineClients(
        RemoteMllmClient(settings.mllm_endpoint, token=token, **options),
        RemoteLlmClient(settings.judge_endpoint, model=settings.judge_model,
                        token=token, **options))


@cli.command("run-pipeline")
@click.argument("annotations", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path))
@click.argument("media_root", type=click.Path(exists=True, file_okay=False,
                                              path_type=Path))
@click.argument("output_dir", type=click.Path(file_okay=False,
                                              path_type=Path))
@click.option("--mode", "modes", type=MODE_CHOICE, multiple=True,
              help="v, va or van; repeat for an ablation (default van).")
@click.option("--mock-fixtures", type=click.Path(exists=True,
                                                 dir_okay=False,
                                                 path_type=Path),
              multiple=True, help="Transcript file(s) for mock clients.")
@click.option("--mllm-endpoint", default=None)
@click.option("--judge-endpoint", default=None)
@click.option("--split-file", type=click.Path(exists=True, dir_okay=False,
                                              path_type=Path),
              help="Only run the test videos of this split.")
@click.option("--frame-count", type=click.IntRange(min=1), default=None)
@click.option("--max-segments", type=click.IntRange(min=1), default=None)
@click.option("--window-start", type=float, default=None,
              help="Start of the analysed window, fraction of the video.")
@click.option("--window-fraction", type=float, default=None,
              help="Length of the analysed window, fraction of the video.")
@click.option("--seed", type=int, default=None)
@config_option
@workers_option
def run_pipeline_cmd(annotations: Path, media_root: Path, output_dir: Path,
                     modes: Tuple[str, ...], mock_fixtures: Tuple[Path, ...],
                     mllm_endpoint: Optional[str],
                     judge_endpoint: Optional[str],
                     split_file: Optional[Path], frame_count: Optional[int],
                     max_segments: Optional[int],
                     window_start: Optional[float],
                     window_fraction: Optional[float], seed: Optional[int],
                     config_file: Optional[Path],
                     workers: Optional[int]) -> None:
    """Run MLLM + judge over ANNOTATIONS videos found under MEDIA_ROOT."""
    config = _config(config_file, {
        "modes": list(modes) or None,
        "clients": {"mllm_endpoint": mllm_endpoint,
                    "judge_endpoint": judge_endpoint},
        "sampling": {"frame_count": frame_count,
                     "max_segments": max_segments,
                     "window_start": window_start,
                     "window_fraction": window_fraction},
        "seed": seed,
        "workers": workers,
    })
    payload = {"annotations": str(annotations),
               "media_root": str(media_root),
               "output_dir": str(output_dir),
               "modes": [m.value for m in config.modes],
               "mock": bool(mock_fixtures),
               "split_file": str(split_file) if split_file else None,
               "sampling": config.sampling.model_dump()}
    with logged("run-pipeline", payload) as record:
        records = annotation_service.load_annotations(annotations)
        if split_file is not None:
            _, records = annotation_service.apply_split(
                records, annotation_service.load_split(split_file))
        clients = _build_clients(config, mock_fixtures)
        try:
            outcome = pipeline_service.run_batch(
                records, pipeline_service.MediaLibrary(media_root), config,
                clients)
        finally:
            clients.close()
        pipeline_service.write_results(output_dir, config, outcome, records)
        record.result = {"results": len(outcome.results),
                         "failures": len(outcome.failures)}

    if outcome.results:
        labels = {r.video_id: r.emotion for r in records}
        table = metrics_service.ablation_report(
            pipeline_service.outcomes_by_mode(outcome.results, labels))
        click.echo(metrics_service.render_table(table), nl=False)
    click.echo(f"{len(outcome.results)} results, {len(outcome.failures)} "
               f"failures written to {output_dir}")


@cli.command("evaluate")
@click.argument("results_dir", type=click.Path(exists=True, file_okay=False,
                                               path_type=Path))
@click.argument("annotations", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path))
@click.option("--split-file", type=click.Path(exists=True, dir_okay=False,
                                              path_type=Path),
              help="Score only the test videos of this split.")
@click.option("--csv", "as_csv", is_flag=True,
              help="Print the table as CSV.")
def evaluate(results_dir: Path, annotations: Path,
             split_file: Optional[Path], as_csv: bool) -> None:
    """Score a results directory against the ANNOTATIONS labels."""
    payload = {"results_dir": str(results_dir),
               "annotations": str(annotations),
               "split_file": str(split_file) if split_file else None}
    with logged("evaluate", payload) as record:
        records = annotation_service.load_annotations(annotations)
        if split_file is not None:
            _, records = annotation_service.apply_split(
                records, annotation_service.load_split(split_file))
        labels = {r.video_id: r.emotion for r in records}
        loaded = pipeline_service.load_results(results_dir)
        results = [r for mode_results in loaded.values()
                   for r in mode_results]
        unlabelled = sorted({r.video_id for r in results
                             if r.video_id not in labels})
        if unlabelled and split_file is None:
            logger.warning("%d result(s) have no label: %s",
                           len(unlabelled), ", ".join(unlabelled[:5]))
        grouped = pipeline_service.outcomes_by_mode(results, labels)
        if not grouped:
            raise EmptyInputError(f"no labelled results in {results_dir}")
        table = metrics_service.ablation_report(grouped)
        record.result = {row.mode: row.report.model_dump()
                         for row in table.rows}

    if as_csv:
        click.echo(metrics_service.render_csv(table), nl=False)
        return
    for row in table.rows:
        click.echo(f"[{row.label}]")
        click.echo(metrics_service.render_report(row.report))
    click.echo(metrics_service.render_table(table), nl=False)


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--reload", is_flag=True)
def serve(host: str, port: int, reload: bool) -> None:
    """Run the HTTP API with uvicorn."""
    import uvicorn

    uvicorn.run("app.main:app", host=host, port=port, reload=reload,
                log_level=app_config.LOG_LEVEL.lower())


if __name__ == "__main__":
    cli()
