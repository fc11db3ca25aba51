"""
Clients for the two model stages.

MllmClient turns sampled frames, mel spectrograms and a prompt into a
descriptive text; LlmClient answers a plain text prompt (the judge). Each
has a remote implementation over JsonTransport and a deterministic mock
that replays transcripts keyed by request hash.

Transcript file (JSON), either one flat map used for both stages or

    {"mllm": {"<request hash>": "text", ...},
     "judge": {"<prompt hash>": "text", ...}}
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.core import app_config
from app.core.errors import (ClientUnavailableError, FixtureMissingError,
                             ParseError, ResponseEmptyError)
from app.schemas.signal_schema import MelSpectrogram
from app.schemas.video_schema import FrameImage
from app.services.http_transport import JsonTransport

logger = logging.getLogger(__name__)

SPECTROGRAM_DECIMALS = 3


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _spectrogram_bytes(mel: MelSpectrogram) -> bytes:
    # 3 decimals, little-endian float32
    values = np.round(mel.values, SPECTROGRAM_DECIMALS)
    return values.astype("<f4").tobytes()


@dataclass(frozen=True)
class MllmRequest:
    """Prompt, frames and spectrograms of one MLLM call."""
    prompt: str
    frames: Sequence[FrameImage] = field(default_factory=tuple)
    spectrograms: Sequence[MelSpectrogram] = field(default_factory=tuple)

    def request_hash(self) -> str:
        header = {
            "prompt": self.prompt,
            "frames": [list(f.pixels.shape) for f in self.frames],
            "spectrograms": [list(s.values.shape)
                             for s in self.spectrograms],
        }
        digest = hashlib.sha256()
        digest.update(json.dumps(header, sort_keys=True,
                                 separators=(",", ":")).encode("utf-8"))
        for frame in self.frames:
            digest.update(np.ascontiguousarray(frame.pixels).tobytes())
        for mel in self.spectrograms:
            digest.update(_spectrogram_bytes(mel))
        return digest.hexdigest()


def _require_text(text: Any, who: str) -> str:
    if not isinstance(text, str) or not text.strip():
        raise ResponseEmptyError(f"{who} returned an empty response")
    return text


class MllmClient(ABC):

    @abstractmethod
    def describe(self, request: MllmRequest) -> str:
        """Descriptive text for the request, returned verbatim."""

    def close(self) -> None:
        pass


class LlmClient(ABC):

    @abstractmethod
    def complete(self, prompt: str) -> str:
        """Reply text for a single user prompt."""

    def close(self) -> None:
        pass


# Remote clients
def _encode_array(array: np.ndarray, dtype: str) -> Dict[str, Any]:
    data = np.ascontiguousarray(array, dtype=dtype)
    return {
        "shape": list(data.shape),
        "dtype": dtype,
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


class RemoteMllmClient(MllmClient):
    """
    request:  {"prompt": str,
               "frames": [{"shape", "dtype": "uint8", "data"}],
               "spectrograms": [{"shape", "dtype": "float32", "data"}]}
    response: {"text": str}
    """

    def __init__(self, endpoint: str, token: Optional[str] = None,
                 transport: Optional[JsonTransport] = None, **options):
        self.transport = transport or JsonTransport(
            endpoint, "mllm", token=token or app_config.CLIENT_TOKEN,
            **options)

    def describe(self, request: MllmRequest) -> str:
        payload = {
            "prompt": request.prompt,
            "frames": [_encode_array(f.pixels, "uint8")
                       for f in request.frames],
            "spectrograms": [_encode_array(s.values, "float32")
                             for s in request.spectrograms],
        }
        reply = self.transport.post(payload)
        if not isinstance(reply, dict):
            raise ClientUnavailableError("mllm reply is not an object")
        return _require_text(reply.get("text"), "mllm")

    def close(self) -> None:
        self.transport.close()


class RemoteLlmClient(LlmClient):
    """OpenAI-style chat completion; a bare {"text": ...} is accepted too."""

    def __init__(self, endpoint: str, model: str = "gpt-3.5-turbo-0125",
                 token: Optional[str] = None,
                 transport: Optional[JsonTransport] = None, **options):
        self.model = model
        self.transport = transport or JsonTransport(
            endpoint, "judge", token=token or app_config.CLIENT_TOKEN,
            **options)

    def complete(self, prompt: str) -> str:
        reply = self.transport.post({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
        if not isinstance(reply, dict):
            raise ClientUnavailableError("judge reply is not an object")
        if "text" in reply:
            return _require_text(reply["text"], "judge")
        try:
            content = reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ClientUnavailableError(
                "judge reply has neither 'text' nor 'choices'") from None
        return _require_text(content, "judge")

    def close(self) -> None:
        self.transport.close()


# Mock clients
class _TranscriptReplay:

    def __init__(self, kind: str, transcripts: Mapping[str, str]):
        self.kind = kind
        self.transcripts = dict(transcripts)
        self.call_log: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    def _lookup(self, key: str, entry: Dict[str, Any]) -> str:
        with self._lock:
            self.call_log.append({"client": self.kind, "hash": key, **entry})
        if key not in self.transcripts:
            raise FixtureMissingError(
                f"no {self.kind} transcript for request {key[:16]}")
        return _require_text(self.transcripts[key], self.kind)


class MockMllmClient(_TranscriptReplay, MllmClient):

    def __init__(self, transcripts: Mapping[str, str]):
        super().__init__("mllm", transcripts)

    def describe(self, request: MllmRequest) -> str:
        return self._lookup(request.request_hash(), {
            "frames": len(request.frames),
            "spectrograms": len(request.spectrograms),
        })


class MockLlmClient(_TranscriptReplay, LlmClient):

    def __init__(self, transcripts: Mapping[str, str]):
        super().__init__("judge", transcripts)

    def complete(self, prompt: str) -> str:
        return self._lookup(prompt_hash(prompt), {})


def _string_map(data: Any, where: str) -> Dict[str, str]:
    if not isinstance(data, dict) or not all(
            isinstance(k, str) and isinstance(v, str)
            for k, v in data.items()):
        raise ParseError(f"{where} must map request hashes to strings")
    return dict(data)


def load_transcripts(paths: Union[str, Path, Sequence[Union[str, Path]]]
                     ) -> Tuple[Dict[str, str], Dict[str, str]]:
    """Merge one or more transcript files into (mllm, judge) maps."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    mllm: Dict[str, str] = {}
    judge: Dict[str, str] = {}
    for path in paths:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ParseError(f"transcripts {path}: {e.msg}",
                             line=e.lineno) from None
        if isinstance(data, dict) and ("mllm" in data or "judge" in data):
            mllm.update(_string_map(data.get("mllm", {}), f"{path}:mllm"))
            judge.update(_string_map(data.get("judge", {}), f"{path}:judge"))
        else:
            flat = _string_map(data, str(path))
            mllm.update(flat)
            judge.update(flat)
    logger.debug("loaded %d mllm and %d judge transcripts",
                 len(mllm), len(judge))
    return mllm, judge
