"""
SQLAlchemy ORM model for the operation log.

Table name: operations
Columns:
    id          – Primary key, auto-increment
    operation   – Command or route name (anonymize-audio, mask-frames, ...)
    input       – JSON summary of the parameters the operation ran with
    result      – JSON summary of what it produced (null on failure)
    timestamp   – UTC datetime when the operation finished
    status      – 'success' or 'error'
    message     – Error text or a short note
"""
from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Integer, String
from sqlalchemy.types import JSON

from app.database.db_connection import Base


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Operation(Base):
    """One logged CLI command or HTTP call."""
    __tablename__ = "operations"

    id: int = Column(Integer, primary_key=True, autoincrement=True, index=True)
    operation: str = Column(String, nullable=False, index=True)
    input: dict = Column(JSON, nullable=False)
    result: dict = Column(JSON, nullable=True)
    timestamp: datetime = Column(DateTime, nullable=False, default=_utcnow)
    status: str = Column(String, nullable=False)
    message: str = Column(String, nullable=True)

    def __repr__(self) -> str:  # pragma: no cover
        msg = (self.message[:40] + "…") \
            if self.message and len(self.message) > 43 \
            else self.message
        return (
            f"<Operation(id={self.id}, op={self.operation}, "
            f"status={self.status}, ts={self.timestamp}, message={msg})>"
        )
