"""
Two-stage emotion inference: an MLLM describes sampled frames, audio
spectrograms and NFBL text, then an LLM judge turns that description into
an emotion label with a 0-10 confidence.

Batch runs process (video, mode) pairs on a thread pool. Each pair yields
exactly one ResultRecord or one FailureRecord; results are collected at a
single point and sorted before anything is written.
"""

from __future__ import annotations

import json
import logging
import math
import re
import shutil
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from string import Template
from typing import (Any, Dict, Iterable, List, NamedTuple, Optional, Sequence,
                    Tuple, Union)

from app.core import app_config
from app.core.errors import (InvalidParamError, JudgeParseError,
                             MediaFormatError)
from app.schemas.annotation_schema import Emotion, NfblClip, VideoRecord
from app.schemas.config_schema import RunConfig
from app.schemas.pipeline_schema import (FailureRecord, PipelineMode,
                                         PipelineResponse, PromptBundle,
                                         ResultRecord, SamplingConfig)
from app.schemas.signal_schema import AudioSignal, MelSpectrogram
from app.schemas.video_schema import FrameImage
from app.services import media_io
from app.services.annotation_service import NfblRegistry, default_registry
from app.services.dsp_service import mel_spectrogram
from app.services.inference_clients import LlmClient, MllmClient, MllmRequest
from app.services.metrics_service import (MODE_LABELS, ablation_report,
                                          render_table)

logger = logging.getLogger(__name__)

MODE_ORDER = [m for m in PipelineMode]
NO_NFBL_LINE = "No notable body language observed."
AUDIO_CLAUSE = (" Mel spectrograms of the accompanying audio, cut into "
                "$segment_s-second clips, are provided as well.")
JUDGE_REPLY = re.compile(
    r"^EMOTION:\s*(positive|negative)\s*\n"
    r"CONFIDENCE:\s*([+-]?\d+(?:\.\d+)?)\s*$",
    re.IGNORECASE,
)
CONFIDENCE_MAX = 10.0


# Prompt assets
@lru_cache(maxsize=8)
def load_prompt_bundle(version: str = "v1",
                       assets_dir: Optional[Path] = None) -> PromptBundle:
    prompts = (assets_dir or app_config.ASSETS_DIR) / "prompts"

    def read(name: str) -> str:
        path = prompts / f"{name}_{version}.txt"
        if not path.is_file():
            raise InvalidParamError(f"no prompt template {path.name}")
        return path.read_text(encoding="utf-8")

    return PromptBundle(version=version,
                        mllm_prompt=read("mllm"),
                        judge_prompt_template=read("judge"),
                        judge_reformat_instruction=read("judge_reformat"))


# Input preparation
def sample_frames_uniform(total_frames: int, m: int) -> List[int]:
    """Center of each of ``m`` equal segments; repeats if total < m."""
    if total_frames < 1 or m < 1:
        raise InvalidParamError("total_frames and m must both be positive")
    return [((2 * i + 1) * total_frames) // (2 * m) for i in range(m)]


def segment_audio(audio: AudioSignal, seg_s: float,
                  max_segments: Optional[int] = None) -> List[AudioSignal]:
    """Back-to-back clips of ``seg_s`` seconds; the remainder is dropped."""
    if seg_s <= 0:
        raise InvalidParamError("segment length must be positive")
    seg_len = int(round(seg_s * audio.sample_rate_hz))
    count = len(audio) // seg_len
    if max_segments is not None:
        count = min(count, max_segments)
    return [AudioSignal(audio.samples[i * seg_len:(i + 1) * seg_len],
                        audio.sample_rate_hz)
            for i in range(count)]


def format_seconds(value: float) -> str:
    """12 -> '12.0', 15.5 -> '15.5', 3.333 -> '3.33'."""
    text = f"{value:.2f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def render_clip(clip: NfblClip, registry: NfblRegistry) -> str:
    start, end = format_seconds(clip.start_s), format_seconds(clip.end_s)
    return f"{registry.name(clip.class_id)} from {start}s to {end}s"


def build_mllm_prompt(clips: Sequence[NfblClip],
                      registry: Optional[NfblRegistry] = None,
                      template: Optional[str] = None,
                      frame_count: int = 32,
                      with_audio: bool = True,
                      with_nfbl: bool = True,
                      segment_s: float = 2.0) -> str:
    registry = registry or default_registry()
    template = template if template is not None \
        else load_prompt_bundle().mllm_prompt

    nfbl_section = ""
    if with_nfbl:
        ordered = sorted(clips, key=lambda c: (c.start_s, c.end_s,
                                               c.class_id))
        if ordered:
            lines = [render_clip(c, registry) for c in ordered]
            nfbl_section = "Non-facial body language observed:\n" + \
                "\n".join(f"- {line}" for line in lines)
        else:
            nfbl_section = NO_NFBL_LINE

    audio_clause = ""
    if with_audio:
        audio_clause = Template(AUDIO_CLAUSE).substitute(
            segment_s=format_seconds(segment_s))

    text = Template(template).substitute(frame_count=frame_count,
                                         audio_clause=audio_clause,
                                         nfbl_section=nfbl_section)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip() + "\n"


# Inference and judging
def mllm_infer(client: MllmClient, frames: Sequence[FrameImage],
               spectrograms: Sequence[MelSpectrogram], prompt: str) -> str:
    return client.describe(MllmRequest(prompt=prompt, frames=tuple(frames),
                                       spectrograms=tuple(spectrograms)))


class Judgement(NamedTuple):
    emotion: Emotion
    confidence: float
    clamped: bool = False
    attempts: int = 1


def judge_prompt(template: str, response: str) -> str:
    return Template(template).substitute(response=response.strip())


def reformat_prompt(prompt: str, instruction: str) -> str:
    return f"{prompt.rstrip()}\n\n{instruction.strip()}\n"


def parse_judge_reply(reply: str) -> Tuple[Emotion, float, bool]:
    """(emotion, confidence clamped to [0, 10], was_clamped)."""
    text = reply.replace("\r\n", "\n").strip()
    match = JUDGE_REPLY.match(text)
    if match is None:
        raise JudgeParseError(f"unparseable judge reply: {text[:80]!r}")
    emotion = Emotion(match.group(1).lower())
    raw = float(match.group(2))
    confidence = min(max(raw, 0.0), CONFIDENCE_MAX)
    return emotion, confidence, confidence != raw


def judge_emotion(client: LlmClient, response: str,
                  template: Optional[str] = None,
                  reformat_instruction: Optional[str] = None) -> Judgement:
    """Ask the judge; one stricter retry if the reply doesn't parse."""
    bundle = load_prompt_bundle()
    template = template or bundle.judge_prompt_template
    reformat_instruction = reformat_instruction or \
        bundle.judge_reformat_instruction

    prompt = judge_prompt(template, response)
    try:
        emotion, confidence, clamped = parse_judge_reply(
            client.complete(prompt))
        attempts = 1
    except JudgeParseError as e:
        logger.info("judge reply rejected (%s); retrying with reformat "
                    "instruction", e)
        reply = client.complete(reformat_prompt(prompt,
                                                reformat_instruction))
        try:
            emotion, confidence, clamped = parse_judge_reply(reply)
        except JudgeParseError as retry_error:
            raise JudgeParseError(
                f"judge reply unparseable after retry: {retry_error}") \
                from None
        attempts = 2
    if clamped:
        logger.warning("judge confidence out of range, clamped to %.2f",
                       confidence)
    return Judgement(emotion, confidence, clamped, attempts)


# Media
@dataclass
class VideoMedia:
    """Frame files (index order) and the optional waveform of one video."""
    video_id: str
    frame_paths: List[Path] = field(default_factory=list)
    audio_path: Optional[Path] = None

    def read_frames(self, positions: Sequence[int]) -> List[FrameImage]:
        cache: Dict[int, FrameImage] = {}
        frames = []
        for pos in positions:
            if pos not in cache:
                cache[pos] = media_io.read_ppm(self.frame_paths[pos])
            frames.append(cache[pos])
        return frames

    def read_audio(self) -> AudioSignal:
        if self.audio_path is None:
            raise MediaFormatError(f"{self.video_id}: no audio.wav")
        return media_io.read_wav(self.audio_path)


class MediaLibrary:
    """<root>/<video_id>/frames/*.ppm and <root>/<video_id>/audio.wav"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def get(self, video_id: str) -> VideoMedia:
        base = self.root / video_id
        frames_dir = base / "frames"
        if not frames_dir.is_dir():
            raise MediaFormatError(f"{video_id}: missing {frames_dir}")
        frames = [p for _, p in media_io.list_frames(frames_dir)]
        if not frames:
            raise MediaFormatError(f"{video_id}: no frames in {frames_dir}")
        audio = base / "audio.wav"
        return VideoMedia(video_id, frames,
                          audio if audio.is_file() else None)


# Temporal window
def window_span(total: int, sampling: SamplingConfig) -> Tuple[int, int]:
    """[start, stop) of the analysed part of a sequence of ``total`` items."""
    start = int(math.floor(sampling.window_start * total))
    length = max(1, int(round(sampling.window_fraction * total)))
    start = min(start, max(total - 1, 0))
    return start, min(total, start + length)


def window_clips(clips: Iterable[NfblClip], t0: float,
                 t1: float) -> List[NfblClip]:
    """Clips cut to [t0, t1]; clips outside the window are dropped."""
    kept = []
    for clip in clips:
        start, end = max(clip.start_s, t0), min(clip.end_s, t1)
        if start < end:
            kept.append(clip.model_copy(update={"start_s": start,
                                                "end_s": end}))
    return kept


class PreparedInput(NamedTuple):
    request: MllmRequest
    frame_count: int
    segment_count: int


def prepare_request(record: VideoRecord, media: VideoMedia,
                    mode: PipelineMode,
                    sampling: Optional[SamplingConfig] = None,
                    registry: Optional[NfblRegistry] = None,
                    bundle: Optional[PromptBundle] = None) -> PreparedInput:
    """Sample frames, cut spectrograms and render the prompt for one mode."""
    sampling = sampling or SamplingConfig()
    bundle = bundle or load_prompt_bundle()
    whole = sampling.window_fraction >= 1.0 and sampling.window_start == 0.0

    f0, f1 = window_span(len(media.frame_paths), sampling)
    positions = [f0 + i for i in
                 sample_frames_uniform(f1 - f0, sampling.frame_count)]
    frames = media.read_frames(positions)

    spectrograms: List[MelSpectrogram] = []
    if mode.uses_audio:
        audio = media.read_audio()
        if not whole:
            a0, a1 = window_span(len(audio), sampling)
            audio = AudioSignal(audio.samples[a0:a1], audio.sample_rate_hz)
        segments = segment_audio(audio, sampling.audio_segment_s,
                                 sampling.max_segments)
        if not segments:
            logger.warning("%s: audio shorter than one %.2fs segment",
                           record.video_id, sampling.audio_segment_s)
        spectrograms = [mel_spectrogram(s, sampling.mel_bins)
                        for s in segments]

    clips: List[NfblClip] = []
    if mode.uses_nfbl:
        clips = list(record.clips)
        if not whole:
            t0 = sampling.window_start * record.duration_s
            t1 = t0 + sampling.window_fraction * record.duration_s
            clips = window_clips(clips, t0, t1)

    prompt = build_mllm_prompt(clips, registry, bundle.mllm_prompt,
                               frame_count=sampling.frame_count,
                               with_audio=mode.uses_audio,
                               with_nfbl=mode.uses_nfbl,
                               segment_s=sampling.audio_segment_s)
    request = MllmRequest(prompt=prompt, frames=tuple(frames),
                          spectrograms=tuple(spectrograms))
    return PreparedInput(request, len(frames), len(spectrograms))


@dataclass
class PipelineClients:
    mllm: MllmClient
    judge: LlmClient

    def close(self) -> None:
        self.mllm.close()
        self.judge.close()


def _run(record: VideoRecord, media: VideoMedia, mode: PipelineMode,
         sampling: SamplingConfig, clients: PipelineClients,
         bundle: PromptBundle, registry: Optional[NfblRegistry]
         ) -> Tuple[PipelineResponse, Dict[str, float]]:
    prepared = prepare_request(record, media, mode, sampling, registry,
                               bundle)
    text = mllm_infer(clients.mllm, prepared.request.frames,
                      prepared.request.spectrograms,
                      prepared.request.prompt)
    verdict = judge_emotion(clients.judge, text,
                            bundle.judge_prompt_template,
                            bundle.judge_reformat_instruction)
    response = PipelineResponse(mllm_text=text, emotion=verdict.emotion,
                                confidence=verdict.confidence,
                                confidence_clamped=verdict.clamped)
    timing = {"frames": float(prepared.frame_count),
              "segments": float(prepared.segment_count),
              "judge_attempts": float(verdict.attempts)}
    return response, timing


def run_pipeline(record: VideoRecord, media: VideoMedia,
                 config: Optional[RunConfig] = None,
                 clients: Optional[PipelineClients] = None,
                 mode: Optional[PipelineMode] = None,
                 registry: Optional[NfblRegistry] = None) -> PipelineResponse:
    """Describe and judge one video in one ablation mode."""
    if clients is None:
        raise InvalidParamError("run_pipeline needs MLLM and judge clients")
    config = config or RunConfig()
    mode = mode or config.modes[0]
    response, _ = _run(record, media, mode, config.sampling, clients,
                       load_prompt_bundle(config.prompt_version), registry)
    return response


def process_video(record: VideoRecord, media: VideoMedia,
                  mode: PipelineMode, config: RunConfig,
                  clients: PipelineClients,
                  registry: Optional[NfblRegistry] = None) -> ResultRecord:
    started = time.perf_counter()
    response, timing = _run(record, media, mode, config.sampling, clients,
                            load_prompt_bundle(config.prompt_version),
                            registry)
    if config.record_wallclock:
        timing["wall_s"] = round(time.perf_counter() - started, 6)
    return ResultRecord(video_id=record.video_id, mode=mode,
                        emotion=response.emotion,
                        confidence=response.confidence,
                        confidence_clamped=response.confidence_clamped,
                        mllm_text=response.mllm_text, timing=timing)


# Batch
@dataclass
class BatchOutcome:
    results: List[ResultRecord] = field(default_factory=list)
    failures: List[FailureRecord] = field(default_factory=list)


def _sort_key(item: Union[ResultRecord, FailureRecord]) -> Tuple[int, str]:
    return MODE_ORDER.index(item.mode), item.video_id


def run_batch(records: Sequence[VideoRecord], library: MediaLibrary,
              config: RunConfig, clients: PipelineClients,
              registry: Optional[NfblRegistry] = None) -> BatchOutcome:
    """Every (video, mode) pair ends as one result or one failure."""
    outcome = BatchOutcome()

    def task(record: VideoRecord, mode: PipelineMode) -> ResultRecord:
        media = library.get(record.video_id)
        return process_video(record, media, mode, config, clients, registry)

    jobs = [(r, m) for m in config.modes for r in records]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = {pool.submit(task, r, m): (r, m) for r, m in jobs}
        for future in as_completed(futures):
            record, mode = futures[future]
            try:
                outcome.results.append(future.result())
            except Exception as e:
                logger.warning("%s [%s] failed: %s", record.video_id,
                               mode.value, e)
                outcome.failures.append(FailureRecord(
                    video_id=record.video_id, mode=mode,
                    error=type(e).__name__, message=str(e)))

    outcome.results.sort(key=_sort_key)
    outcome.failures.sort(key=_sort_key)
    logger.info("batch done: %d results, %d failures",
                len(outcome.results), len(outcome.failures))
    return outcome


# Results directory
def _dump(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) \
        + "\n"


def _write_text(path: Path, text: str) -> None:
    with media_io.atomic_write(path, "w") as handle:
        handle.write(text)


def outcomes_by_mode(results: Iterable[ResultRecord],
                     labels: Dict[str, Emotion]
                     ) -> Dict[str, List[Tuple[Emotion, Emotion, float]]]:
    """Group (prediction, label, confidence) by mode for labelled videos."""
    grouped: Dict[str, List[Tuple[Emotion, Emotion, float]]] = {}
    for result in results:
        label = labels.get(result.video_id)
        if label is None:
            continue
        grouped.setdefault(result.mode.value, []).append(
            (result.emotion, label, result.confidence))
    return grouped


DERIVED_FILES = ("ablation.txt", "ablation.json", "summary.json",
                 "failures.jsonl")


def _clear_previous_run(out: Path) -> None:
    results = out / "results"
    if results.is_dir():
        logger.info("replacing previous results in %s", out)
        shutil.rmtree(results)
    for name in DERIVED_FILES:
        (out / name).unlink(missing_ok=True)


def write_results(out_dir: Union[str, Path], config: RunConfig,
                  outcome: BatchOutcome,
                  records: Sequence[VideoRecord]) -> Dict[str, Any]:
    """Write the results directory and return the summary.

    Results and tables of an earlier run in the same directory are removed
    first; the tree always describes exactly this batch.
    """
    out = Path(out_dir)
    _clear_previous_run(out)
    _write_text(out / "run_config.json", _dump(config.echo()))

    for result in outcome.results:
        path = out / "results" / result.mode.value / f"{result.video_id}.json"
        _write_text(path, _dump(result.model_dump(mode="json")))

    _write_text(out / "failures.jsonl", "".join(
        json.dumps(f.model_dump(mode="json"), sort_keys=True) + "\n"
        for f in outcome.failures))

    labels = {r.video_id: r.emotion for r in records}
    grouped = outcomes_by_mode(outcome.results, labels)
    table = ablation_report(grouped) if grouped else None

    summary: Dict[str, Any] = {"modes": {}}
    for mode in config.modes:
        failed = sum(1 for f in outcome.failures if f.mode is mode)
        row = None
        if table is not None:
            row = next((r for r in table.rows if r.mode == mode.value), None)
        summary["modes"][mode.value] = {
            "label": MODE_LABELS[mode.value],
            "evaluated": len(grouped.get(mode.value, [])),
            "failed": failed,
            "report": row.report.model_dump(mode="json") if row else None,
        }
    _write_text(out / "summary.json", _dump(summary))

    if table is not None:
        _write_text(out / "ablation.txt", render_table(table))
        _write_text(out / "ablation.json",
                    _dump(table.model_dump(mode="json")))
    return summary


def load_results(results_dir: Union[str, Path]
                 ) -> Dict[PipelineMode, List[ResultRecord]]:
    """Read results/<mode>/<video_id>.json back, sorted by video id."""
    base = Path(results_dir) / "results"
    if not base.is_dir():
        raise MediaFormatError(f"{results_dir} has no results/ directory")
    loaded: Dict[PipelineMode, List[ResultRecord]] = {}
    for mode in MODE_ORDER:
        mode_dir = base / mode.value
        if not mode_dir.is_dir():
            continue
        loaded[mode] = [
            ResultRecord.model_validate_json(p.read_text(encoding="utf-8"))
            for p in sorted(mode_dir.glob("*.json"))
        ]
    return loaded

