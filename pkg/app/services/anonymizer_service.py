"""
McAdams speaker anonymization.

Per frame: Hann window -> LPC -> residual -> poles -> angle warp
theta -> theta ** lambda -> new A(z) -> resynthesis from the residual,
followed by overlap-add of all frames.

Only complex poles are warped; real poles (angle 0 or pi) are left alone so
the pole set stays conjugate-closed. Warped angles are kept inside
(eps, pi - eps) and magnitudes below 1 - 1e-6 so resynthesis stays stable.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from app.schemas.signal_schema import (AnonymizationParams, AudioSignal,
                                       PoleSet)
from app.services import dsp_service

logger = logging.getLogger(__name__)

MAX_POLE_RADIUS = 1.0 - 1e-6
CLIP_PEAK = 0.99


def warp_pole_angles(poles: PoleSet, mcadams_lambda: float,
                     epsilon: float = 1e-6) -> PoleSet:
    """Raise every complex pole angle to the power lambda, keeping radius."""
    p = poles.poles
    theta = np.angle(p)
    radius = np.abs(p)
    magnitude = np.minimum(radius, MAX_POLE_RADIUS)
    abs_theta = np.abs(theta)
    warp = (abs_theta > epsilon) & (abs_theta < np.pi - epsilon)

    new_abs = abs_theta.copy()
    new_abs[warp] = np.clip(abs_theta[warp] ** mcadams_lambda,
                            epsilon, np.pi - epsilon)
    new_theta = np.where(warp, np.sign(theta) * new_abs, theta)

    # unwarped poles keep their exact value apart from the radius clamp
    kept = p * (magnitude / np.maximum(radius, np.finfo(float).tiny))
    warped = np.where(warp, magnitude * np.exp(1j * new_theta), kept)
    return PoleSet(poles=warped, gain=poles.gain)


def _anonymize_frame(frame: np.ndarray, window: np.ndarray,
                     params: AnonymizationParams) -> np.ndarray:
    windowed = frame * window
    if not np.any(windowed):
        return windowed
    fit = dsp_service.lpc_levinson(windowed, params.frame.lpc_order)
    residual = dsp_service.lpc_residual(windowed, fit.coefficients)
    poles = dsp_service.to_pole_set(fit.coefficients)
    warped = warp_pole_angles(poles, params.mcadams_lambda,
                              params.complex_angle_epsilon)
    new_coefficients = dsp_service.poles_to_coeffs(warped)
    return dsp_service.synthesize(residual, new_coefficients)


def anonymize_mcadams(audio: AudioSignal,
                      params: Optional[AnonymizationParams] = None,
                      workers: int = 1) -> AudioSignal:
    """
    Anonymize a mono signal with the McAdams coefficient.

    The signal is padded by one shift on the left so its first sample sits
    under two overlapping windows like every other sample. Frames may be
    processed by a thread pool; results are gathered in frame order so the
    output is identical to a sequential run.
    """
    params = params or AnonymizationParams()
    audio.require_samples()
    fs = audio.sample_rate_hz
    params.frame.check_rate(fs)
    win = params.frame.window_samples(fs)
    shift = params.frame.shift_samples(fs)

    padded = AudioSignal(np.concatenate([np.zeros(shift), audio.samples]), fs)
    frames = dsp_service.frame_signal(padded, params.frame)
    window = dsp_service.hann_window(win)
    logger.debug("anonymizing %d frames (lambda=%.3f, win=%d, shift=%d, "
                 "order=%d)", len(frames), params.mcadams_lambda, win, shift,
                 params.frame.lpc_order)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            processed = list(pool.map(
                lambda f: _anonymize_frame(f, window, params), frames))
    else:
        processed = [_anonymize_frame(f, window, params) for f in frames]

    out = dsp_service.overlap_add(processed, params.frame, len(padded), fs)
    out = out[shift:shift + len(audio)]
    peak = float(np.max(np.abs(out))) if out.size else 0.0
    if peak > 1.0:
        logger.info("output peak %.3f clipped, rescaling to %.2f",
                    peak, CLIP_PEAK)
        out = out * (CLIP_PEAK / peak)
    return AudioSignal(out, fs)
