from fastapi import APIRouter, HTTPException, Request, status

from app.schemas.api_schema import OperationResponse
from app.services.annotation_service import (dataset_summary,
                                             histogram_rows,
                                             nfbl_category_histogram,
                                             nfbl_histogram,
                                             parse_annotations)
from app.services.operation_log import log_operation

router = APIRouter()


@router.post(
    "/summary",
    response_model=OperationResponse,
    summary="Summarize an annotation document",
    description="Send an annotation document (JSON Lines with the "
                "'eald-annotations' header) as the request body; receive "
                "the dataset summary and the NFBL histograms. "
                "Requires an `X-API-Key` header."
)
async def summary_endpoint(request: Request):
    body = await request.body()
    params_in = {"bytes": len(body)}
    try:
        records = parse_annotations(body.decode("utf-8"))
        summary = dataset_summary(records)
        histogram = nfbl_histogram(records)
        result = {
            "summary": summary.model_dump(),
            "histogram": histogram_rows(histogram),
            "categories": nfbl_category_histogram(records),
        }
    except (ValueError, UnicodeDecodeError) as e:
        log_operation("annotations-summary", params_in, None, "error",
                      str(e))
        raise HTTPException(
            status.HTTP_400_BAD_REQUEST,
            detail={
                "operation": "annotations-summary",
                "input": params_in,
                "result": None,
                "status": "error",
                "message": str(e),
            }
        )
    log_operation("annotations-summary", params_in,
                  {"videos": summary.video_count,
                   "clips": summary.clip_count}, "success")
    return OperationResponse(
        operation="annotations-summary",
        input=params_in,
        result=result,
        status="success",
        message="Annotations summarized successfully"
    )
