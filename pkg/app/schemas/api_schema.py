"""
Pydantic models for the HTTP surface. Every JSON route answers with the
common OperationResponse (without the auto-incremented database ID).
"""

from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.annotation_schema import Emotion


# 1. Request schemas
class BoxIn(BaseModel):
    x: int
    y: int
    w: int = Field(..., gt=0)
    h: int = Field(..., gt=0)


class MaskRequest(BaseModel):
    """Payload for /mask – one base-64 PPM frame and its face boxes."""
    frame: str = Field(..., description="Binary PPM (P6), base-64 encoded")
    boxes: List[BoxIn] = Field(default_factory=list)
    sigma_policy: str = Field("proportional",
                              description="'proportional[:factor]' or "
                                          "'fixed:<sigma>'")


class EvaluationItem(BaseModel):
    prediction: Emotion
    label: Emotion
    confidence: Optional[float] = Field(None, ge=0, le=10)


class EvaluateRequest(BaseModel):
    """Payload for /evaluate – one item per video."""
    items: List[EvaluationItem]


# 2. Response schema
class OperationResponse(BaseModel):
    """
    Standard API response:
      • operation  – route name ('mask', 'annotations-summary', ...)
      • input      – summary of the request parameters
      • result     – operation output as a dict
      • timestamp  – UTC time when the operation was processed
      • status     – "success" or "error"
      • message    – error explanation if status = "error"
    """
    operation: str
    input: Dict[str, Any]
    result: Optional[Dict[str, Any]] = None
    timestamp: datetime = Field(
        default_factory=lambda: datetime.now(timezone.utc)
    )
    status: str = "success"
    message: Optional[str] = None

    # Enables conversion from SQLAlchemy model instances
    model_config = ConfigDict(from_attributes=True)
