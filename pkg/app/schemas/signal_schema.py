"""
Signal-side types.

Parameter objects (FrameParams, AnonymizationParams) are pydantic models so
they validate on construction and serialize into the run config. Containers
holding sample arrays are frozen dataclasses around numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import EmptyInputError, InvalidParamError


# 1. Parameter models
class FrameParams(BaseModel):
    """Analysis framing: window/shift in milliseconds plus LPC order."""
    model_config = ConfigDict(frozen=True)

    win_ms: float = Field(20.0, gt=0, description="Window length T_win (ms)")
    shift_ms: float = Field(10.0, gt=0, description="Step size T_shift (ms)")
    lpc_order: int = Field(20, gt=0, description="LPC analysis order")

    @model_validator(mode="after")
    def _shift_within_window(self) -> "FrameParams":
        if self.shift_ms > self.win_ms:
            raise ValueError("shift_ms must not exceed win_ms")
        return self

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.win_ms * sample_rate_hz / 1000.0))

    def shift_samples(self, sample_rate_hz: int) -> int:
        return max(1, int(round(self.shift_ms * sample_rate_hz / 1000.0)))

    def check_rate(self, sample_rate_hz: int) -> None:
        """Raise InvalidParamError when the params don't fit the rate."""
        win = self.window_samples(sample_rate_hz)
        if win < 2:
            raise InvalidParamError(
                f"window of {self.win_ms} ms is shorter than 2 samples "
                f"at {sample_rate_hz} Hz")
        if self.lpc_order >= win:
            raise InvalidParamError(
                f"lpc_order {self.lpc_order} must be below the frame "
                f"length ({win} samples)")


class AnonymizationParams(BaseModel):
    """McAdams anonymization settings."""
    model_config = ConfigDict(frozen=True)

    frame: FrameParams = Field(default_factory=FrameParams)
    mcadams_lambda: float = Field(0.8, gt=0, lt=2,
                                  description="McAdams coefficient")
    complex_angle_epsilon: float = Field(
        1e-6, gt=0,
        description="Poles closer than this (rad) to 0 or pi count as real")


# 2. Sample containers
@dataclass(frozen=True)
class AudioSignal:
    """Mono samples (nominal range [-1, 1]) and their sample rate."""
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidParamError("audio samples must be one-dimensional")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidParamError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(samples)):
            raise InvalidParamError("audio contains NaN or Inf samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def require_samples(self) -> None:
        if self.samples.size == 0:
            raise EmptyInputError("audio has no samples")


@dataclass(frozen=True)
class LpcFrame:
    """LPC fit of one windowed frame: A(z) coefficients and residual."""
    coefficients: np.ndarray
    residual: np.ndarray
    prediction_error_power: float

    @property
    def order(self) -> int:
        return int(self.coefficients.size - 1)


@dataclass(frozen=True)
class PoleSet:
    """Poles of the all-pole synthesis filter 1/A(z) and its gain."""
    poles: np.ndarray = field(
        default_factory=lambda: np.zeros(0, dtype=np.complex128))
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "poles", np.asarray(self.poles, dtype=np.complex128))

    def __len__(self) -> int:
        return int(self.poles.size)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-mel values, rows are mel bins and columns are time frames."""
    values: np.ndarray

    @property
    def bin_count(self) -> int:
        return int(self.values.shape[0])

    @property
    def frame_count(self) -> int:
        return int(self.values.shape[1])
