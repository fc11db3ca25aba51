"""Dump the operation log: python -m tools.debug_db [operation] [status]"""
import json
import sys
from typing import List, Optional, TextIO

from app.database.db_connection import SessionLocal, init_db
from app.models.operation_model import Operation


def dump_operations(operation: Optional[str] = None,
                    status: Optional[str] = None,
                    out: TextIO = sys.stdout) -> int:
    """Print matching rows oldest first, one JSON object per line."""
    init_db()
    db = SessionLocal()
    try:
        query = db.query(Operation)
        if operation:
            query = query.filter_by(operation=operation)
        if status:
            query = query.filter_by(status=status)
        rows = query.order_by(Operation.id).all()
        for row in rows:
            out.write(json.dumps({
                "id": row.id,
                "operation": row.operation,
                "input": row.input,
                "result": row.result,
                "timestamp": row.timestamp.isoformat(),
                "status": row.status,
                "message": row.message,
            }, sort_keys=True) + "\n")
        return len(rows)
    finally:
        db.close()


def main(argv: List[str]) -> None:
    dump_operations(*argv[:2])


if __name__ == "__main__":
    main(sys.argv[1:])
