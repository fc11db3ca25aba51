from fastapi import APIRouter, HTTPException, status

from app.schemas.api_schema import EvaluateRequest, OperationResponse
from app.services.metrics_service import evaluate_outcomes
from app.services.operation_log import log_operation

router = APIRouter()


@router.post(
    "/",
    response_model=OperationResponse,
    summary="Score binary emotion predictions",
    description="Accuracy, precision, recall, F-score and mean confidence "
                "of (prediction, label, confidence) items; positive is the "
                "positive class. Requires an `X-API-Key` header."
)
async def evaluate_endpoint(req: EvaluateRequest):
    params_in = {"items": len(req.items)}
    try:
        report = evaluate_outcomes(
            (i.prediction, i.label, i.confidence) for i in req.items)
    except ValueError as e:
        log_operation("evaluate", params_in, None, "error", str(e))
        raise HTTPException(
            status.HTTP_400_BAD_REQUEST,
            detail={
                "operation": "evaluate",
                "input": params_in,
                "result": None,
                "status": "error",
                "message": str(e),
            }
        )
    result = report.model_dump()
    log_operation("evaluate", params_in, result, "success")
    return OperationResponse(
        operation="evaluate",
        input=params_in,
        result=result,
        status="success",
        message="Predictions evaluated successfully"
    )
