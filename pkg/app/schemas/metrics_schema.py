"""
Evaluation schemas: confusion counts, per-set report and ablation rows.
"""

from typing import List, Optional

from pydantic import BaseModel, Field


class ConfusionCounts(BaseModel):
    """Positive is the positive class."""
    tp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


class EvalReport(BaseModel):
    """
    Metrics for one prediction set:
      • accuracy, precision, recall, f1 – fractions in [0, 1]
      • mean_confidence                – mean judge confidence, 0 … 10
    """
    counts: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float
    mean_confidence: Optional[float] = None


class AblationRow(BaseModel):
    mode: str
    label: str
    report: EvalReport


class AblationTable(BaseModel):
    rows: List[AblationRow]
