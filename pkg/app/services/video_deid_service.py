"""
Face-region de-identification.

Faces are blurred with a separable Gaussian (horizontal then vertical pass)
confined to the clipped box: samples beyond the box edge are clamped to the
box border, so no pixel from outside the box flows into it and no pixel
outside the box is touched.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from math import ceil
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import ndimage

from app.core.errors import InvalidParamError
from app.schemas.video_schema import FaceBox, FrameImage, SigmaPolicy
from app.services.face_detectors import FaceDetector

logger = logging.getLogger(__name__)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian of radius ceil(3 * sigma)."""
    if not sigma > 0:
        raise InvalidParamError("sigma must be positive")
    radius = int(ceil(3.0 * sigma))
    n = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(n * n) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def detect_faces(frame: FrameImage, detector: FaceDetector,
                 frame_index: int = 0) -> List[FaceBox]:
    """Ask the detector for boxes; the caller clips them to the frame."""
    return list(detector.detect(frame, frame_index))


def blur_region(frame: FrameImage, box: FaceBox, sigma: float) -> FrameImage:
    """Blur the pixels inside box; everything outside stays bit-identical."""
    kernel = gaussian_kernel(sigma)
    clipped = box.clip(frame.width, frame.height)
    if clipped is None:
        return frame

    ys = slice(clipped.y, clipped.y + clipped.h)
    xs = slice(clipped.x, clipped.x + clipped.w)
    region = frame.pixels[ys, xs].astype(np.float64)
    region = ndimage.correlate1d(region, kernel, axis=1, mode="nearest")
    region = ndimage.correlate1d(region, kernel, axis=0, mode="nearest")

    pixels = frame.pixels.copy()
    pixels[ys, xs] = np.clip(np.rint(region), 0, 255).astype(np.uint8)
    return FrameImage(pixels)


def group_boxes(boxes: Iterable[FaceBox]) -> Dict[int, List[FaceBox]]:
    """Boxes per frame index, keeping their listed order."""
    grouped: Dict[int, List[FaceBox]] = defaultdict(list)
    for box in boxes:
        grouped[box.frame_index].append(box)
    return dict(grouped)


def mask_frame(frame: FrameImage, boxes: Sequence[FaceBox],
               sigma_policy: Optional[SigmaPolicy] = None) -> FrameImage:
    """Apply blur_region for each box in listed order."""
    policy = sigma_policy or SigmaPolicy()
    for box in boxes:
        clipped = box.clip(frame.width, frame.height)
        if clipped is None:
            logger.debug("box %s lies outside frame %d, skipped",
                         box, box.frame_index)
            continue
        frame = blur_region(frame, clipped, policy.sigma_for(clipped))
    return frame


def mask_frames(frames: Sequence[FrameImage], boxes: Iterable[FaceBox],
                sigma_policy: Optional[SigmaPolicy] = None,
                workers: int = 1) -> List[FrameImage]:
    """
    Blur every box of every frame. frames[i] is frame index i; boxes that
    point past the last frame are reported and skipped.
    """
    grouped = group_boxes(boxes)
    for index in sorted(i for i in grouped if i >= len(frames)):
        logger.warning("boxes reference missing frame %d, skipped", index)

    def _one(i: int) -> FrameImage:
        return mask_frame(frames[i], grouped.get(i, []), sigma_policy)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one, range(len(frames))))
    return [_one(i) for i in range(len(frames))]
