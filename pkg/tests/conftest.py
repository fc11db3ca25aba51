import json
import os
import tempfile
from pathlib import Path
from types import SimpleNamespace

# Point the operation log at a throwaway database before the app loads
os.environ.setdefault(
    "DATABASE_URL",
    f"sqlite:///{Path(tempfile.mkdtemp()) / 'test.db'}")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from fastapi.testclient import TestClient  # noqa: E402
from scipy import signal  # noqa: E402

from app.main import app  # noqa: E402
from app.schemas.annotation_schema import (Emotion, NfblClip,  # noqa: E402
                                           VideoRecord)
from app.schemas.pipeline_schema import PipelineMode  # noqa: E402
from app.schemas.signal_schema import AudioSignal  # noqa: E402
from app.schemas.video_schema import FrameImage  # noqa: E402
from app.services import media_io  # noqa: E402
from app.services.annotation_service import (  # noqa: E402
    serialize_annotations)
from app.services.inference_clients import prompt_hash  # noqa: E402
from app.services.pipeline_service import (  # noqa: E402
    MediaLibrary, judge_prompt, load_prompt_bundle, prepare_request)


@pytest.fixture(scope="module")
def client():
    """
    Create a TestClient for the FastAPI app.
    This client can be used to make requests to the app in tests.
    """
    with TestClient(app) as c:
        yield c


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_ar_signal():
    """AR-filtered noise, a rough stand-in for voiced speech."""
    def make(seconds, rate=16_000, poles=((0.97, 0.3), (0.9, 1.2)),
             seed=0, peak=0.5):
        gen = np.random.default_rng(seed)
        a = np.array([1.0])
        for radius, angle in poles:
            a = np.convolve(a, [1.0, -2 * radius * np.cos(angle),
                                radius * radius])
        x = signal.lfilter([1.0], a, gen.standard_normal(int(seconds * rate)))
        return AudioSignal(peak * x / np.max(np.abs(x)), rate)
    return make


# Pipeline dataset: six labelled videos, media on disk, mock transcripts
VIDEOS = [
    ("g01", Emotion.POSITIVE, [("N9", 1.0, 2.5), ("N3", 0.2, 0.9)]),
    ("g02", Emotion.NEGATIVE, [("N5", 0.5, 3.0)]),
    ("g03", Emotion.POSITIVE, []),
    ("g04", Emotion.NEGATIVE, [("N24", 2.0, 4.0), ("N9", 0.1, 0.4)]),
    ("g05", Emotion.POSITIVE, [("N0", 3.0, 4.2)]),
    ("g06", Emotion.NEGATIVE, [("N9", 1.5, 1.9)]),
]
# predicted emotion and confidence per video
VERDICTS = {
    "g01": ("positive", 8), "g02": ("negative", 6), "g03": ("negative", 4),
    "g04": ("negative", 7), "g05": ("positive", 9), "g06": ("positive", 5),
}


def _write_media(root, video_id, seed, frame_count=40, seconds=4.5):
    gen = np.random.default_rng(seed)
    frames_dir = root / video_id / "frames"
    for i in range(frame_count):
        pixels = gen.integers(0, 256, size=(6, 8, 3), dtype=np.uint8)
        media_io.write_ppm(frames_dir / f"frame_{i:06d}.ppm",
                           FrameImage(pixels))
    audio = AudioSignal(0.3 * gen.standard_normal(int(seconds * 16_000))
                        .clip(-3, 3) / 3, 16_000)
    media_io.write_wav(root / video_id / "audio.wav", audio,
                       float_output=True)


def build_transcripts(records, library, modes, skip=()):
    """Transcript maps answering every (video, mode) not listed in skip."""
    bundle = load_prompt_bundle()
    mllm, judge = {}, {}
    for record in records:
        for mode in modes:
            if (record.video_id, mode) in skip:
                continue
            prepared = prepare_request(record, library.get(record.video_id),
                                       mode)
            text = (f"The player in {record.video_id} ({mode.value}) walks "
                    "to the bench and sits down.")
            mllm[prepared.request.request_hash()] = text
            emotion, confidence = VERDICTS[record.video_id]
            prompt = judge_prompt(bundle.judge_prompt_template, text)
            judge[prompt_hash(prompt)] = \
                f"EMOTION: {emotion}\nCONFIDENCE: {confidence}"
    return mllm, judge


@pytest.fixture
def pipeline_dataset(tmp_path):
    records = [
        VideoRecord(video_id=vid, emotion=emotion, duration_s=5.0, fps=8.0,
                    clips=[NfblClip(video_id=vid, class_id=c, start_s=s,
                                    end_s=e) for c, s, e in clips])
        for vid, emotion, clips in VIDEOS
    ]
    annotations = tmp_path / "annotations.jsonl"
    annotations.write_text(serialize_annotations(records), encoding="utf-8")

    media_root = tmp_path / "media"
    for n, record in enumerate(records):
        _write_media(media_root, record.video_id, seed=n)
    library = MediaLibrary(media_root)

    modes = list(PipelineMode)
    mllm, judge = build_transcripts(records, library, modes)
    fixtures = tmp_path / "transcripts.json"
    fixtures.write_text(json.dumps({"mllm": mllm, "judge": judge},
                                   sort_keys=True), encoding="utf-8")
    return SimpleNamespace(records=records, annotations=annotations,
                           media_root=media_root, library=library,
                           fixtures=fixtures, mllm=mllm, judge=judge,
                           root=tmp_path)
