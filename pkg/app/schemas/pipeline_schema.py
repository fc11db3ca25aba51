"""
Pipeline schemas: sampling settings, prompt bundle, judged response and the
per-video result / failure records written by batch runs.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.annotation_schema import Emotion


class PipelineMode(str, Enum):
    """Which modalities reach the MLLM."""
    VIDEO = "v"
    VIDEO_AUDIO = "va"
    VIDEO_AUDIO_NFBL = "van"

    @property
    def uses_audio(self) -> bool:
        return self is not PipelineMode.VIDEO

    @property
    def uses_nfbl(self) -> bool:
        return self is PipelineMode.VIDEO_AUDIO_NFBL


class SamplingConfig(BaseModel):
    """
    Input preparation:
      • frame_count      – M frames sampled uniformly (segment centers)
      • audio_segment_s  – length of each non-overlapping audio clip
      • mel_bins         – mel bins per spectrogram
      • max_segments     – optional cap on the number of audio clips
      • window_start / window_fraction – analyse only part of the video
    """
    model_config = ConfigDict(frozen=True)

    frame_count: int = Field(32, ge=1)
    audio_segment_s: float = Field(2.0, gt=0)
    mel_bins: int = Field(128, ge=1)
    max_segments: Optional[int] = Field(None, ge=1)
    window_start: float = Field(0.0, ge=0, lt=1)
    window_fraction: float = Field(1.0, gt=0, le=1)

    @model_validator(mode="after")
    def _window_inside_video(self) -> "SamplingConfig":
        if self.window_start + self.window_fraction > 1.0 + 1e-9:
            raise ValueError("window_start + window_fraction must be <= 1")
        return self


class PromptBundle(BaseModel):
    """MLLM prompt template plus the judge template and its retry note."""
    model_config = ConfigDict(frozen=True)

    version: str
    mllm_prompt: str
    judge_prompt_template: str
    judge_reformat_instruction: str


class PipelineResponse(BaseModel):
    mllm_text: str
    emotion: Emotion
    confidence: float = Field(..., ge=0, le=10)
    confidence_clamped: bool = False


class ResultRecord(BaseModel):
    """One line of output per (video, mode)."""
    video_id: str
    mode: PipelineMode
    emotion: Emotion
    confidence: float
    confidence_clamped: bool = False
    mllm_text: str
    timing: Dict[str, float] = Field(default_factory=dict)


class FailureRecord(BaseModel):
    video_id: str
    mode: PipelineMode
    error: str
    message: str
