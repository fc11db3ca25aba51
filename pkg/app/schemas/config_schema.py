"""
RunConfig: the merged, serializable settings of one CLI run.

Built by app.core.run_config.load_run_config and echoed into every output
directory as run_config.json.
"""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, SecretStr, field_validator

from app.schemas.pipeline_schema import PipelineMode, SamplingConfig
from app.schemas.signal_schema import AnonymizationParams


class ClientSettings(BaseModel):
    """Endpoints and transport limits for the remote clients."""
    model_config = ConfigDict(frozen=True)

    mllm_endpoint: Optional[str] = None
    judge_endpoint: Optional[str] = None
    detector_endpoint: Optional[str] = None
    judge_model: str = "gpt-3.5-turbo-0125"
    token: Optional[SecretStr] = None
    timeout_s: float = Field(60.0, gt=0)
    max_attempts: int = Field(3, ge=1)
    max_in_flight: int = Field(4, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    anonymization: AnonymizationParams = Field(
        default_factory=AnonymizationParams)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    clients: ClientSettings = Field(default_factory=ClientSettings)
    workers: int = Field(1, ge=1)
    seed: int = 0
    modes: List[PipelineMode] = Field(
        default_factory=lambda: [PipelineMode.VIDEO_AUDIO_NFBL])
    sigma_policy: str = "proportional"
    prompt_version: str = "v1"
    # wall-clock timings in result files
    record_wallclock: bool = False

    @field_validator("modes")
    @classmethod
    def _unique_modes(cls, modes: List[PipelineMode]) -> List[PipelineMode]:
        if not modes:
            raise ValueError("at least one mode is required")
        return list(dict.fromkeys(modes))

    def echo(self) -> dict:
        """JSON-ready view; the client token is never written out."""
        data = self.model_dump(mode="json")
        if data["clients"].get("token") is not None:
            data["clients"]["token"] = "**********"
        return data
