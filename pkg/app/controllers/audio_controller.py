from fastapi import APIRouter, HTTPException, Query, Request, status
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool

from app.schemas.signal_schema import AnonymizationParams, FrameParams
from app.services import media_io
from app.services.anonymizer_service import anonymize_mcadams
from app.services.operation_log import log_operation

router = APIRouter()


@router.post(
    "/",
    response_class=Response,
    summary="Anonymize speech",
    description="Send a RIFF/PCM waveform (16-bit integer or 32-bit float, "
                "mono or stereo) as the request body; receive the McAdams "
                "anonymized waveform as 16-bit PCM. "
                "Requires an `X-API-Key` header."
)
async def anonymize_endpoint(
    request: Request,
    mcadams_lambda: float = Query(0.8, alias="lambda", gt=0, lt=2),
    win_ms: float = Query(20.0, gt=0),
    shift_ms: float = Query(10.0, gt=0),
    lpc_order: int = Query(20, gt=0),
):
    params_in = {"lambda": mcadams_lambda, "win_ms": win_ms,
                 "shift_ms": shift_ms, "lpc_order": lpc_order}
    try:
        params = AnonymizationParams(
            frame=FrameParams(win_ms=win_ms, shift_ms=shift_ms,
                              lpc_order=lpc_order),
            mcadams_lambda=mcadams_lambda)
        audio = media_io.decode_wav(await request.body())
        anonymized = await run_in_threadpool(anonymize_mcadams, audio,
                                             params)
        payload = media_io.encode_wav(anonymized)
    except ValueError as e:
        log_operation("anonymize", params_in, None, "error", str(e))
        raise HTTPException(
            status.HTTP_400_BAD_REQUEST,
            detail={
                "operation": "anonymize",
                "input": params_in,
                "result": None,
                "status": "error",
                "message": str(e),
            }
        )
    log_operation("anonymize", params_in,
                  {"samples": len(anonymized),
                   "sample_rate_hz": anonymized.sample_rate_hz},
                  "success")
    return Response(content=payload, media_type="audio/wav")
