"""
Frame and face-box types for video de-identification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import InvalidParamError


@dataclass(frozen=True)
class FrameImage:
    """8-bit frame, pixels shaped (height, width, channels), row-major."""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.dtype != np.uint8 or pixels.ndim != 3:
            raise InvalidParamError(
                "frame pixels must be a uint8 array of shape (h, w, c)")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise InvalidParamError("frame must have positive dimensions")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return int(self.pixels.shape[2])


class FaceBox(BaseModel):
    """Face rectangle reported for one frame."""
    model_config = ConfigDict(frozen=True)

    frame_index: int = Field(0, ge=0)
    x: int
    y: int
    w: int = Field(..., gt=0)
    h: int = Field(..., gt=0)

    def clip(self, width: int, height: int) -> Optional["FaceBox"]:
        """Intersect with the frame rectangle; None if nothing is left."""
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return FaceBox(frame_index=self.frame_index,
                       x=x0, y=y0, w=x1 - x0, h=y1 - y0)


class SigmaPolicy(BaseModel):
    """
    Blur strength per box: proportional (sigma = factor * max(w, h)) or a
    fixed sigma.
    """
    model_config = ConfigDict(frozen=True)

    mode: Literal["proportional", "fixed"] = "proportional"
    factor: float = Field(0.25, gt=0)
    sigma: Optional[float] = Field(None, gt=0)

    @classmethod
    def parse(cls, text: str) -> "SigmaPolicy":
        """'proportional', 'proportional:0.3' or 'fixed:6.5'."""
        mode, _, value = text.strip().partition(":")
        try:
            if mode == "proportional":
                return cls(factor=float(value)) if value else cls()
            if mode == "fixed" and value:
                return cls(mode="fixed", sigma=float(value))
        except ValueError as e:
            raise InvalidParamError(f"bad sigma policy {text!r}: {e}") \
                from None
        raise InvalidParamError(
            f"bad sigma policy {text!r}; expected 'proportional[:factor]' "
            "or 'fixed:<sigma>'")

    def sigma_for(self, box: FaceBox) -> float:
        if self.mode == "fixed":
            if self.sigma is None:
                raise InvalidParamError("fixed sigma policy needs a sigma")
            return self.sigma
        return self.factor * max(box.w, box.h)
