"""
Operation log: one row in the `operations` table per CLI command or HTTP
call, written on success and on failure alike.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Dict, Iterator, Optional

from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session

from app.core import app_config
from app.database.db_connection import SessionLocal, init_db
from app.models.operation_model import Operation

logger = logging.getLogger(__name__)

_ready = False


def _ensure_tables() -> None:
    global _ready
    if not _ready:
        init_db()
        _ready = True


def log_operation(
        operation: str,
        payload: Dict[str, Any],
        result: Optional[Dict[str, Any]],
        status: str,
        message: Optional[str] = None
) -> None:
    """
    Insert a row in the `operations` table.
    Opens and closes its own SQLAlchemy session per call. Does nothing when
    OPERATION_LOG is off; database failures only produce a warning.
    """
    if not app_config.OPERATION_LOG:
        return
    try:
        _ensure_tables()
    except SQLAlchemyError as e:
        logger.warning("operation log unavailable: %s", e)
        return
    db: Session = SessionLocal()
    try:
        db.add(Operation(
            operation=operation,
            input=payload,
            result=result,
            timestamp=datetime.now(timezone.utc),
            status=status,
            message=message,
        ))
        db.commit()
    except SQLAlchemyError as e:
        db.rollback()
        logger.warning("could not log %s: %s", operation, e)
    finally:
        db.close()


class OperationRecord:
    """Result holder filled in by the body of ``logged``."""

    def __init__(self):
        self.result: Optional[Dict[str, Any]] = None
        self.message: Optional[str] = None


@contextmanager
def logged(operation: str,
           payload: Dict[str, Any]) -> Iterator[OperationRecord]:
    """Log success with ``record.result`` or the error, then re-raise."""
    record = OperationRecord()
    try:
        yield record
    except Exception as e:
        log_operation(operation, payload, None, "error", str(e))
        raise
    log_operation(operation, payload, record.result, "success",
                  record.message)
