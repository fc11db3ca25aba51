"""
Pluggable face detectors.

The toolkit doesn't run a detection model itself. Boxes come either from a
sidecar file produced by an external detector, or from a remote detection
service reached over HTTP.

Sidecar format (JSON Lines, one box per line, blank lines ignored):

    {"frame_index": 0, "x": 512, "y": 96, "w": 180, "h": 220}
"""

from __future__ import annotations

import base64
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from pydantic import ValidationError

from app.core import app_config
from app.core.errors import DetectorUnavailableError, ParseError
from app.schemas.video_schema import FaceBox, FrameImage
from app.services.http_transport import JsonTransport
from app.services.media_io import encode_ppm

logger = logging.getLogger(__name__)


class FaceDetector(ABC):
    """Returns face boxes (possibly out of bounds) for one frame."""

    @abstractmethod
    def detect(self, frame: FrameImage, frame_index: int) -> List[FaceBox]:
        ...

    def close(self) -> None:
        pass


def parse_box_lines(lines: Iterable[str]) -> List[FaceBox]:
    boxes = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            boxes.append(FaceBox.model_validate_json(line))
        except ValidationError as e:
            raise ParseError(f"invalid face box: {e.errors()[0]['msg']}",
                             line=number) from None
    return boxes


def load_boxes(path: Union[str, Path]) -> List[FaceBox]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read box file {path}: {e}") from None
    return parse_box_lines(text.splitlines())


class FileFaceDetector(FaceDetector):
    """Boxes looked up by frame index in a sidecar file."""

    def __init__(self, boxes: Iterable[FaceBox]):
        self._by_frame: Dict[int, List[FaceBox]] = {}
        for box in boxes:
            self._by_frame.setdefault(box.frame_index, []).append(box)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "FileFaceDetector":
        detector = cls(load_boxes(path))
        logger.debug("loaded boxes for %d frames from %s",
                     len(detector.frame_indices), path)
        return detector

    @property
    def frame_indices(self) -> List[int]:
        return sorted(self._by_frame)

    def detect(self, frame: FrameImage, frame_index: int) -> List[FaceBox]:
        return list(self._by_frame.get(frame_index, []))


class RemoteFaceDetector(FaceDetector):
    """
    Posts one encoded frame per request and reads back a box list.

    request:  {"frame_index": i, "width": w, "height": h,
               "ppm_base64": "..."}
    response: {"boxes": [{"x": .., "y": .., "w": .., "h": ..}, ...]}
    """

    def __init__(self, endpoint: str, token: Optional[str] = None,
                 transport: Optional[JsonTransport] = None, **options):
        self.transport = transport or JsonTransport(
            endpoint, "detector",
            token=token or app_config.CLIENT_TOKEN,
            unavailable=DetectorUnavailableError, **options)

    def detect(self, frame: FrameImage, frame_index: int) -> List[FaceBox]:
        payload = {
            "frame_index": frame_index,
            "width": frame.width,
            "height": frame.height,
            "ppm_base64": base64.b64encode(encode_ppm(frame)).decode("ascii"),
        }
        reply = self.transport.post(payload)
        try:
            return [FaceBox(frame_index=frame_index, **item)
                    for item in reply.get("boxes", [])]
        except (TypeError, ValidationError, AttributeError) as e:
            raise DetectorUnavailableError(
                f"detector returned malformed boxes: {e}") from None

    def close(self) -> None:
        self.transport.close()

