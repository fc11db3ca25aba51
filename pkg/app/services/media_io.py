"""
Media file I/O: RIFF/PCM waveforms and binary PPM (P6) frames.

Supported waveform encodings: 16-bit integer PCM and 32-bit float, mono or
stereo (stereo is downmixed by averaging). Output waveforms are written as
16-bit PCM unless float output is requested.

Every writer goes through atomic_write: data lands in a temporary file next
to the target and is renamed over it, so a failed run never leaves a partial
output behind.
"""

from __future__ import annotations

import io
import os
import re
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.io import wavfile

from app.core.errors import MediaFormatError
from app.schemas.signal_schema import AudioSignal
from app.schemas.video_schema import FrameImage

PathLike = Union[str, Path]
FRAME_INDEX = re.compile(r"(\d+)$")


@contextmanager
def atomic_write(path: PathLike, mode: str = "wb") -> Iterator:
    """Write to a temp file in the target directory, then rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent,
                                    prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as handle:
            yield handle
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


# Waveforms
def decode_wav(data: bytes) -> AudioSignal:
    try:
        rate, samples = wavfile.read(io.BytesIO(data))
    except (ValueError, EOFError, OSError) as e:
        raise MediaFormatError(f"unreadable waveform: {e}") from None
    return _to_signal(rate, samples)


def read_wav(path: PathLike) -> AudioSignal:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise MediaFormatError(f"cannot read {path}: {e}") from None
    return decode_wav(data)


def _to_signal(rate: int, samples: np.ndarray) -> AudioSignal:
    if samples.dtype == np.int16:
        values = samples.astype(np.float64) / 32768.0
    elif samples.dtype == np.float32:
        values = samples.astype(np.float64)
    else:
        raise MediaFormatError(
            f"unsupported sample encoding {samples.dtype}; expected 16-bit "
            "integer or 32-bit float PCM")
    if values.ndim == 2:
        if values.shape[1] > 2:
            raise MediaFormatError(
                f"{values.shape[1]} channels; only mono or stereo supported")
        values = values.mean(axis=1)
    if not np.all(np.isfinite(values)):
        raise MediaFormatError("waveform contains NaN or Inf samples")
    return AudioSignal(values, int(rate))


def encode_wav(audio: AudioSignal, float_output: bool = False) -> bytes:
    buffer = io.BytesIO()
    if float_output:
        data = audio.samples.astype(np.float32)
    else:
        data = np.clip(np.rint(audio.samples * 32767.0), -32768, 32767) \
            .astype(np.int16)
    wavfile.write(buffer, audio.sample_rate_hz, data)
    return buffer.getvalue()


def write_wav(path: PathLike, audio: AudioSignal,
              float_output: bool = False) -> None:
    payload = encode_wav(audio, float_output)
    with atomic_write(path) as handle:
        handle.write(payload)


# Frames
def decode_ppm(data: bytes) -> FrameImage:
    try:
        with Image.open(io.BytesIO(data)) as image:
            if image.format != "PPM" or image.mode != "RGB":
                raise MediaFormatError(
                    f"expected a binary RGB PPM, got {image.format} "
                    f"{image.mode}")
            return FrameImage(np.array(image, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise MediaFormatError(f"unreadable frame: {e}") from None


def read_ppm(path: PathLike) -> FrameImage:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise MediaFormatError(f"cannot read {path}: {e}") from None
    return decode_ppm(data)


def encode_ppm(frame: FrameImage) -> bytes:
    buffer = io.BytesIO()
    if frame.channels != 3:
        raise MediaFormatError("PPM frames must have 3 channels")
    Image.fromarray(frame.pixels).save(buffer, format="PPM")
    return buffer.getvalue()


def write_ppm(path: PathLike, frame: FrameImage) -> None:
    payload = encode_ppm(frame)
    with atomic_write(path) as handle:
        handle.write(payload)


def list_frames(directory: PathLike) -> List[Tuple[int, Path]]:
    """(frame index, path) for every *.ppm, index parsed from the name."""
    found = []
    for path in Path(directory).glob("*.ppm"):
        match = FRAME_INDEX.search(path.stem)
        if match is None:
            raise MediaFormatError(
                f"frame file {path.name} has no trailing frame index")
        found.append((int(match.group(1)), path))
    return sorted(found)
