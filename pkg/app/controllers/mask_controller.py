import base64
import binascii

from fastapi import APIRouter, HTTPException, status
from starlette.concurrency import run_in_threadpool

from app.schemas.api_schema import MaskRequest, OperationResponse
from app.schemas.video_schema import FaceBox, SigmaPolicy
from app.services import media_io
from app.services.operation_log import log_operation
from app.services.video_deid_service import mask_frame

router = APIRouter()


@router.post(
    "/",
    response_model=OperationResponse,
    status_code=status.HTTP_201_CREATED,
    summary="Blur faces in one frame",
    description="Blur each face box of a base-64 PPM frame with a Gaussian "
                "kernel; pixels outside the boxes are returned unchanged. "
                "Requires an `X-API-Key` header."
)
async def mask_endpoint(req: MaskRequest):
    params_in = {"boxes": [b.model_dump() for b in req.boxes],
                 "sigma_policy": req.sigma_policy}
    try:
        try:
            raw = base64.b64decode(req.frame, validate=True)
        except binascii.Error as e:
            raise ValueError(f"frame is not valid base-64: {e}") from None
        frame = media_io.decode_ppm(raw)
        boxes = [FaceBox(frame_index=0, **b.model_dump()) for b in req.boxes]
        masked = await run_in_threadpool(
            mask_frame, frame, boxes, SigmaPolicy.parse(req.sigma_policy))
        encoded = base64.b64encode(media_io.encode_ppm(masked))
    except ValueError as e:
        log_operation("mask", params_in, None, "error", str(e))
        raise HTTPException(
            status.HTTP_400_BAD_REQUEST,
            detail={
                "operation": "mask",
                "input": params_in,
                "result": None,
                "status": "error",
                "message": str(e),
            }
        )
    log_operation("mask", params_in,
                  {"width": masked.width, "height": masked.height},
                  "success")
    return OperationResponse(
        operation="mask",
        input=params_in,
        result={"frame": encoded.decode("ascii"),
                "width": masked.width, "height": masked.height},
        status="success",
        message="Faces blurred successfully"
    )
