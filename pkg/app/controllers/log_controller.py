from fastapi import APIRouter, Depends, Query
from typing import List, Optional, cast

from sqlalchemy import desc
from sqlalchemy.orm import Session
from sqlalchemy.sql.elements import ColumnElement

from app.database.db_connection import get_db
from app.models.operation_model import Operation
from app.schemas.api_schema import OperationResponse

router = APIRouter()


@router.get(
    "/",
    response_model=List[OperationResponse],
    tags=["Logs"],
    summary="Retrieve up to 300 logged operations.")
def get_logs(
    db: Session = Depends(get_db),
    operation: Optional[str] = Query(
        None,
        description="Filter by operation (e.g. 'anonymize', 'mask', "
                    "'run-pipeline')"
    ),
    status: Optional[str] = Query(
        None,
        description="Filter by status (e.g. 'success' or 'error')"
    ),
    limit: int = Query(
        300,
        le=300,
        description="Maximum number of rows to return (max 300)"
    ),
):
    """
    Returns the most recent CLI and API operations, optionally filtered by
    operation and status. Requires an `X-API-Key` header.
    """
    query = db.query(Operation).order_by(
        desc(cast(ColumnElement, Operation.timestamp)),
        desc(cast(ColumnElement, Operation.id)),
    )

    if operation:
        query = query.filter_by(operation=operation)
    if status:
        query = query.filter_by(status=status)

    return query.limit(limit).all()
