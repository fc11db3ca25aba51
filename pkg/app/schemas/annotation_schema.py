"""
Annotation data model: NFBL classes, timed NFBL clips, per-video emotion
labels, dataset summary and benchmark split.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Emotion(str, Enum):
    """Video-level label: match won (positive) or lost (negative)."""
    POSITIVE = "positive"
    NEGATIVE = "negative"


class NfblCategory(str, Enum):
    SELF_MANIPULATION = "self_manipulation"
    OBJECT_MANIPULATION = "object_manipulation"
    SELF_PROTECTION = "self_protection"


class NfblClass(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., pattern=r"^N\d+$")
    name: str
    category: NfblCategory


class NfblClip(BaseModel):
    """One timed body-language occurrence inside a video."""
    model_config = ConfigDict(frozen=True)

    video_id: str
    class_id: str
    start_s: float = Field(..., ge=0)
    end_s: float
    # reserved, nothing reads these yet
    annotator: Optional[str] = None
    confidence: Optional[float] = None

    @model_validator(mode="after")
    def _ordered_and_finite(self) -> "NfblClip":
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError("clip times must be finite")
        if not self.start_s < self.end_s:
            raise ValueError(
                f"clip start {self.start_s} must be before end {self.end_s}")
        return self

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


class VideoRecord(BaseModel):
    """Per-video emotion label plus its NFBL clips."""
    model_config = ConfigDict(frozen=True)

    video_id: str = Field(..., min_length=1)
    emotion: Emotion
    duration_s: float = Field(..., gt=0)
    fps: float = Field(..., gt=0)
    clips: List[NfblClip] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def _inherit_video_id(cls, data: Any) -> Any:
        # clips in the document don't repeat their video's id
        if isinstance(data, dict) and isinstance(data.get("clips"), list):
            vid = data.get("video_id")
            data = dict(data)
            data["clips"] = [
                {"video_id": vid, **c} if isinstance(c, dict) else c
                for c in data["clips"]
            ]
        return data

    @model_validator(mode="after")
    def _clips_inside_video(self) -> "VideoRecord":
        for clip in self.clips:
            if clip.video_id != self.video_id:
                raise ValueError(
                    f"clip belongs to {clip.video_id!r}, "
                    f"not {self.video_id!r}")
            if clip.end_s > self.duration_s:
                raise ValueError(
                    f"clip ends at {clip.end_s}s after the video's "
                    f"{self.duration_s}s")
        return self

    @property
    def frame_count(self) -> int:
        return max(1, int(round(self.duration_s * self.fps)))


class DatasetSummary(BaseModel):
    video_count: int
    clip_count: int
    total_hours: float
    average_minutes: float
    label_counts: Dict[str, int]
    min_clip_s: Optional[float] = None
    max_clip_s: Optional[float] = None


class DatasetSplit(BaseModel):
    """Disjoint train/test video-id lists."""
    train: List[str]
    test: List[str]

    @model_validator(mode="after")
    def _disjoint(self) -> "DatasetSplit":
        overlap = set(self.train) & set(self.test)
        if overlap:
            raise ValueError(
                f"train and test share videos: {sorted(overlap)[:5]}")
        return self
