"""
Numerical signal-processing primitives.

Framing, windowing, LPC analysis/synthesis, polynomial roots, overlap-add,
resampling and log-mel spectrograms. Everything here is a pure function of
its inputs, so callers may use it from any number of worker threads.

Design choices
--------------
* LPC by the autocorrelation method (Levinson-Durbin). r[0] is inflated
  slightly so near-silent frames still give a minimum-phase A(z).
* Roots are the eigenvalues of the companion matrix (LAPACK balances it).
  Roots with |Im| < 1e-10 are snapped to the real axis and complex roots are
  re-paired with their conjugate partners so coefficient reconstruction
  stays real.
* The last partial frame is zero-padded rather than dropped.
"""

from __future__ import annotations

import logging
from math import gcd
from typing import NamedTuple, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft, linalg, signal
from scipy.optimize import linear_sum_assignment

from app.core.errors import (EmptyInputError, InvalidParamError,
                             UnstableFilterError)
from app.schemas.signal_schema import (AudioSignal, FrameParams, LpcFrame,
                                       MelSpectrogram, PoleSet)

logger = logging.getLogger(__name__)

# Constants
AUTOCORR_INFLATION = 1e-9
AUTOCORR_FLOOR = 1e-12
REAL_SNAP_TOL = 1e-10
CONJUGATE_TOL = 1e-8
OLA_FLOOR = 1e-6
RESAMPLE_KAISER_BETA = 8.6
RESAMPLE_TAPS_PER_PHASE = 64
MEL_WIN_MS = 25.0
MEL_HOP_MS = 10.0
MEL_N_FFT = 512
LOG_FLOOR = 1e-6


class LpcFit(NamedTuple):
    coefficients: np.ndarray
    prediction_error_power: float


# Framing and windows
def frame_count(n_samples: int, win: int, shift: int) -> int:
    """Number of frames covering n_samples, last one zero-padded."""
    return int(np.ceil(max(1, n_samples - win + shift) / shift))


def frame_signal(audio: AudioSignal, params: FrameParams) -> np.ndarray:
    """
    Split audio into overlapping frames, one per row.

    Frame i starts at sample i * shift; the final partial frame is
    zero-padded to the full window length.
    """
    audio.require_samples()
    params.check_rate(audio.sample_rate_hz)
    win = params.window_samples(audio.sample_rate_hz)
    shift = params.shift_samples(audio.sample_rate_hz)
    count = frame_count(len(audio), win, shift)
    padded = np.zeros((count - 1) * shift + win)
    padded[:len(audio)] = audio.samples
    return sliding_window_view(padded, win)[::shift].copy()


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window; shifted copies at 50% overlap sum to 1."""
    if length < 2:
        raise InvalidParamError("window length must be at least 2")
    return signal.get_window("hann", length, fftbins=True)


# LPC analysis / synthesis
def lpc_levinson(frame: Sequence[float], order: int) -> LpcFit:
    """Autocorrelation-method LPC via the Levinson-Durbin recursion."""
    x = np.asarray(frame, dtype=np.float64)
    if order < 0 or order >= x.size:
        raise InvalidParamError(
            f"order {order} must be in [0, {x.size - 1}] for this frame")
    a = np.zeros(order + 1)
    a[0] = 1.0
    if not np.any(x):
        return LpcFit(a, 0.0)

    n = x.size
    r = signal.correlate(x, x, mode="full", method="direct")[n - 1:n + order]
    r[0] = r[0] * (1.0 + AUTOCORR_INFLATION) + AUTOCORR_FLOOR

    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        prev = a[:i + 1].copy()
        a[1:i + 1] = prev[1:i + 1] + k * prev[i - 1::-1]
        err = max(err * (1.0 - k * k), 0.0)
    return LpcFit(a, float(err))


def _require_monic(coefficients: np.ndarray) -> None:
    if coefficients.size == 0 or not np.isclose(coefficients[0], 1.0,
                                                rtol=0, atol=1e-12):
        raise InvalidParamError("coefficients[0] must be 1")


def lpc_residual(frame: Sequence[float],
                 coefficients: Sequence[float]) -> np.ndarray:
    """FIR analysis filter A(z) with zero initial state."""
    a = np.asarray(coefficients, dtype=np.float64)
    _require_monic(a)
    return signal.lfilter(a, [1.0], np.asarray(frame, dtype=np.float64))


def analyze_frame(frame: Sequence[float], order: int) -> LpcFrame:
    fit = lpc_levinson(frame, order)
    return LpcFrame(coefficients=fit.coefficients,
                    residual=lpc_residual(frame, fit.coefficients),
                    prediction_error_power=fit.prediction_error_power)


def synthesize(residual: Sequence[float],
               coefficients: Sequence[float]) -> np.ndarray:
    """All-pole synthesis 1/A(z); exact inverse of lpc_residual."""
    a = np.asarray(coefficients, dtype=np.float64)
    _require_monic(a)
    if a.size > 1:
        radius = np.abs(poly_roots(a))
        if np.any(radius >= 1.0):
            raise UnstableFilterError(
                f"synthesis filter has a pole at radius {radius.max():.6f}")
    return signal.lfilter([1.0], a, np.asarray(residual, dtype=np.float64))


# Roots and poles
def _pair_conjugates(roots: np.ndarray) -> np.ndarray:
    """Snap near-real roots and average each complex root with its partner."""
    imag = roots.imag
    real_mask = np.abs(imag) < REAL_SNAP_TOL
    reals = list(roots[real_mask].real)
    upper = roots[~real_mask & (imag > 0)]
    lower = roots[~real_mask & (imag < 0)]

    pairs = []
    used_upper, used_lower = set(), set()
    if upper.size and lower.size:
        cost = np.abs(upper[:, None] - np.conj(lower)[None, :])
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            pairs.append(0.5 * (upper[r] + np.conj(lower[c])))
        used_upper, used_lower = set(rows.tolist()), set(cols.tolist())
    # leftovers only appear when the eigen solver broke symmetry
    reals += [upper[i].real for i in range(upper.size) if i not in used_upper]
    reals += [lower[i].real for i in range(lower.size) if i not in used_lower]

    pairs = np.asarray(pairs, dtype=np.complex128)
    pairs = pairs[np.lexsort((np.abs(pairs), np.angle(pairs)))]
    out = np.empty(2 * pairs.size + len(reals), dtype=np.complex128)
    out[0:2 * pairs.size:2] = pairs
    out[1:2 * pairs.size:2] = np.conj(pairs)
    out[2 * pairs.size:] = np.sort(np.asarray(reals, dtype=np.float64))[::-1]
    return out


def poly_roots(coefficients: Sequence[float]) -> np.ndarray:
    """All roots of sum_k a_k z^(p-k), i.e. the poles of 1/A(z)."""
    a = np.atleast_1d(np.asarray(coefficients, dtype=np.float64))
    if a.size == 0 or a[0] == 0:
        raise InvalidParamError("leading coefficient must be nonzero")
    if a.size == 1:
        return np.zeros(0, dtype=np.complex128)
    roots = linalg.eigvals(linalg.companion(a))
    return _pair_conjugates(np.asarray(roots, dtype=np.complex128))


def to_pole_set(coefficients: Sequence[float]) -> PoleSet:
    """tf2zpk for an all-pole filter: zeros are trivial, gain is 1/a0."""
    a = np.atleast_1d(np.asarray(coefficients, dtype=np.float64))
    return PoleSet(poles=poly_roots(a), gain=float(1.0 / a[0]))


def is_conjugate_closed(poles: np.ndarray, tol: float = CONJUGATE_TOL) -> bool:
    poles = np.asarray(poles, dtype=np.complex128)
    if poles.size == 0:
        return True
    cost = np.abs(poles[:, None] - np.conj(poles)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return bool(cost[rows, cols].max() < tol)


def poles_to_coeffs(poles: Union[PoleSet, Sequence[complex]]) -> np.ndarray:
    """Expand prod(z - p_i) into real monic coefficients."""
    p = poles.poles if isinstance(poles, PoleSet) else \
        np.asarray(poles, dtype=np.complex128)
    if p.size == 0:
        return np.array([1.0])
    if not is_conjugate_closed(p):
        raise InvalidParamError("pole set is not closed under conjugation")
    coeffs = np.poly(p)
    if np.iscomplexobj(coeffs):
        residue = float(np.max(np.abs(coeffs.imag)))
        if residue >= CONJUGATE_TOL:
            raise InvalidParamError(
                f"imaginary residue {residue:.3e} in expanded coefficients")
        coeffs = coeffs.real
    return np.asarray(coeffs, dtype=np.float64)


# Reconstruction
def overlap_add(frames: Sequence[Sequence[float]], params: FrameParams,
                total_length: int, sample_rate_hz: int) -> np.ndarray:
    """
    Sum frames at their original offsets and divide by the summed analysis
    windows (floored at 1e-6). Output is truncated to total_length.
    """
    out_len = max(int(total_length), 0)
    if len(frames) == 0:
        return np.zeros(out_len)
    win = params.window_samples(sample_rate_hz)
    shift = params.shift_samples(sample_rate_hz)
    window = hann_window(win)

    span = (len(frames) - 1) * shift + win
    acc = np.zeros(max(span, out_len))
    norm = np.zeros_like(acc)
    for i, frame in enumerate(frames):
        start = i * shift
        acc[start:start + win] += np.asarray(frame, dtype=np.float64)[:win]
        norm[start:start + win] += window
    acc /= np.maximum(norm, OLA_FLOOR)
    return acc[:out_len]


def resample(audio: AudioSignal, target_rate_hz: int) -> AudioSignal:
    """
    Rational resampling with a Kaiser windowed-sinc low-pass
    (beta 8.6, 64 taps per polyphase branch).
    """
    if target_rate_hz <= 0:
        raise InvalidParamError("target_rate_hz must be positive")
    source = audio.sample_rate_hz
    if target_rate_hz == source:
        return audio
    n_out = int(round(len(audio) * target_rate_hz / source))
    if len(audio) == 0:
        return AudioSignal(np.zeros(0), target_rate_hz)

    g = gcd(int(target_rate_hz), source)
    up, down = target_rate_hz // g, source // g
    max_rate = max(up, down)
    half_len = RESAMPLE_TAPS_PER_PHASE // 2 * max_rate
    # cutoff at min(source, target) / 2, relative to the upsampled Nyquist
    taps = signal.firwin(2 * half_len + 1, 1.0 / max_rate,
                         window=("kaiser", RESAMPLE_KAISER_BETA))
    y = signal.resample_poly(audio.samples, up, down, window=taps)
    if y.size < n_out:
        y = np.pad(y, (0, n_out - y.size))
    logger.debug("resampled %d -> %d Hz (%d -> %d samples)",
                 source, target_rate_hz, len(audio), n_out)
    return AudioSignal(y[:n_out], target_rate_hz)


# Mel spectrograms
def hz_to_mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_band_edges(sample_rate_hz: int, bins: int) -> np.ndarray:
    """bins + 2 frequencies (Hz) evenly spaced in mel from 0 to f_s/2."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0),
                                 bins + 2))


def mel_filterbank(sample_rate_hz: int, n_fft: int, bins: int) -> np.ndarray:
    """Triangular filters, shape (bins, n_fft // 2 + 1), peak value 1."""
    edges = mel_band_edges(sample_rate_hz, bins)
    freqs = fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    lower = (freqs[None, :] - edges[:-2, None]) / \
        (edges[1:-1] - edges[:-2])[:, None]
    upper = (edges[2:, None] - freqs[None, :]) / \
        (edges[2:] - edges[1:-1])[:, None]
    return np.maximum(0.0, np.minimum(lower, upper))


def stft_sizes(sample_rate_hz: int) -> tuple:
    """(window, hop, n_fft) in samples for the mel front end."""
    win = int(round(MEL_WIN_MS * sample_rate_hz / 1000.0))
    hop = max(1, int(round(MEL_HOP_MS * sample_rate_hz / 1000.0)))
    n_fft = max(MEL_N_FFT, 1 << int(np.ceil(np.log2(max(win, 2)))))
    return win, hop, n_fft


def mel_spectrogram(audio: AudioSignal, bins: int = 128) -> MelSpectrogram:
    """Log-mel spectrogram: Hann STFT (25 ms / 10 ms), log(x + 1e-6)."""
    audio.require_samples()
    if bins < 1:
        raise InvalidParamError("bins must be at least 1")
    win, hop, n_fft = stft_sizes(audio.sample_rate_hz)
    if len(audio) < win:
        raise EmptyInputError(
            f"audio ({len(audio)} samples) is shorter than one STFT window "
            f"({win} samples)")
    frames = sliding_window_view(audio.samples, win)[::hop] * hann_window(win)
    power = np.abs(fft.rfft(frames, n=n_fft, axis=1)) ** 2
    mel = mel_filterbank(audio.sample_rate_hz, n_fft, bins) @ power.T
    return MelSpectrogram(values=np.log(mel + LOG_FLOOR))
