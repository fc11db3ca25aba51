import numpy as np
import pytest
from scipy import signal
from scipy.optimize import linear_sum_assignment

from app.core.errors import (EmptyInputError, InvalidParamError,
                             UnstableFilterError)
from app.schemas.signal_schema import AudioSignal, FrameParams, PoleSet
from app.services import dsp_service as dsp

FS = 16_000
PARAMS = FrameParams()


def _rel_l2(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _match_error(expected, got):
    cost = np.abs(np.asarray(expected)[:, None] - np.asarray(got)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return cost[rows, cols].max()


def _random_conjugate_set(gen, degree):
    pairs = degree // 2
    radius = gen.uniform(0.1, 0.95, pairs)
    angle = gen.uniform(0.05, np.pi - 0.05, pairs)
    upper = radius * np.exp(1j * angle)
    poles = np.concatenate([upper, np.conj(upper)])
    if degree % 2:
        poles = np.append(poles, gen.uniform(-0.95, 0.95))
    return poles


# Framing and windows
def test_frame_signal_one_second():
    frames = dsp.frame_signal(AudioSignal(np.ones(FS), FS), PARAMS)
    assert frames.shape == (99, 320)


def test_frame_signal_starts_every_shift(rng):
    x = rng.standard_normal(1000)
    frames = dsp.frame_signal(AudioSignal(x, FS), PARAMS)
    for i, frame in enumerate(frames):
        chunk = x[i * 160:i * 160 + 320]
        np.testing.assert_array_equal(frame[:chunk.size], chunk)
        assert not frame[chunk.size:].any()


def test_frame_signal_single_window_is_identity(rng):
    x = rng.standard_normal(320)
    frames = dsp.frame_signal(AudioSignal(x, FS), PARAMS)
    assert frames.shape == (1, 320)
    np.testing.assert_array_equal(frames[0], x)


def test_frame_signal_short_input_is_zero_padded():
    frames = dsp.frame_signal(AudioSignal(np.ones(100), FS), PARAMS)
    assert frames.shape == (1, 320)
    assert frames[0, :100].tolist() == [1.0] * 100
    assert not frames[0, 100:].any()


def test_frame_signal_empty_audio():
    with pytest.raises(EmptyInputError):
        dsp.frame_signal(AudioSignal(np.zeros(0), FS), PARAMS)


def test_lpc_order_must_be_below_frame_length():
    with pytest.raises(InvalidParamError):
        dsp.frame_signal(AudioSignal(np.ones(FS), FS),
                         FrameParams(win_ms=1.0, shift_ms=0.5, lpc_order=20))


def test_hann_window_values():
    np.testing.assert_allclose(dsp.hann_window(4), [0.0, 0.5, 1.0, 0.5],
                               atol=1e-15)
    assert dsp.hann_window(7)[0] == 0.0


def test_hann_window_too_short():
    with pytest.raises(InvalidParamError):
        dsp.hann_window(1)


def test_hann_window_cola():
    w = dsp.hann_window(320)
    np.testing.assert_allclose(w[:160] + w[160:], 1.0, atol=1e-12)


# LPC
def test_lpc_levinson_ar1(rng):
    x = signal.lfilter([1.0], [1.0, -0.9], rng.standard_normal(20_000))
    fit = dsp.lpc_levinson(x, 1)
    assert fit.coefficients[0] == 1.0
    assert abs(fit.coefficients[1] + 0.9) < 0.05


def test_lpc_levinson_constant_frame_matches_normal_equation():
    x = np.ones(64)
    r0 = 64 * (1 + 1e-9) + 1e-12
    fit = dsp.lpc_levinson(x, 1)
    assert fit.coefficients[1] == pytest.approx(-63 / r0, rel=1e-12)


def test_lpc_levinson_all_zero_frame():
    fit = dsp.lpc_levinson(np.zeros(32), 2)
    assert fit.coefficients.tolist() == [1.0, 0.0, 0.0]
    assert fit.prediction_error_power == 0.0


def test_lpc_levinson_is_minimum_phase(rng):
    window = dsp.hann_window(320)
    for _ in range(200):
        frame = rng.standard_normal(320) * window
        order = int(rng.integers(2, 25))
        roots = dsp.poly_roots(dsp.lpc_levinson(frame, order).coefficients)
        assert np.all(np.abs(roots) < 1.0)


def test_lpc_residual_examples():
    frame = np.array([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(dsp.lpc_residual(frame, [1.0]), frame)
    np.testing.assert_allclose(dsp.lpc_residual(frame, [1.0, -0.5]),
                               [1.0, -0.5, 0.0, 0.0])


def test_lpc_residual_requires_monic():
    with pytest.raises(InvalidParamError):
        dsp.lpc_residual(np.ones(4), [2.0, 1.0])


def test_lpc_residual_whitens_ar_frame(rng):
    x = signal.lfilter([1.0], [1.0, -0.9], rng.standard_normal(4000))
    residual = dsp.lpc_residual(x, [1.0, -0.9])
    assert np.sum(residual ** 2) < np.sum(x ** 2)


def test_analyze_frame_shapes(rng):
    frame = rng.standard_normal(320) * dsp.hann_window(320)
    lpc = dsp.analyze_frame(frame, 20)
    assert lpc.order == 20
    assert lpc.residual.shape == frame.shape
    assert lpc.prediction_error_power >= 0


def test_synthesize_inverts_residual(rng):
    window = dsp.hann_window(320)
    for trial in range(1000):
        order = 2 + trial % 23
        noise = rng.standard_normal(320)
        if trial % 2:
            noise = signal.lfilter([1.0], [1.0, -1.6, 0.8], noise)
        frame = noise * window
        a = dsp.lpc_levinson(frame, order).coefficients
        rebuilt = dsp.synthesize(dsp.lpc_residual(frame, a), a)
        assert _rel_l2(rebuilt, frame) < 1e-8


def test_synthesize_examples():
    impulse = np.zeros(6)
    impulse[0] = 1.0
    np.testing.assert_allclose(dsp.synthesize(impulse, [1.0, -0.5]),
                               0.5 ** np.arange(6))
    np.testing.assert_array_equal(dsp.synthesize(impulse, [1.0]), impulse)


def test_synthesize_rejects_unstable_filter():
    with pytest.raises(UnstableFilterError):
        dsp.synthesize(np.ones(8), [1.0, -1.5])


# Roots and poles
def test_poly_roots_real_pair():
    roots = dsp.poly_roots([1.0, -1.7, 0.72])
    assert np.all(roots.imag == 0)
    np.testing.assert_allclose(roots.real, [0.9, 0.8], atol=1e-12)


def test_poly_roots_imaginary_pair():
    roots = dsp.poly_roots([1.0, 0.0, 0.25])
    assert _match_error([0.5j, -0.5j], roots) < 1e-12
    assert roots[0] == np.conj(roots[1])


def test_poly_roots_degree_zero():
    assert dsp.poly_roots([1.0]).size == 0


def test_poly_roots_leading_zero():
    with pytest.raises(InvalidParamError):
        dsp.poly_roots([0.0, 1.0])


def test_to_pole_set_keeps_gain():
    poles = dsp.to_pole_set([2.0, -3.4, 1.44])
    assert poles.gain == 0.5
    assert len(poles) == 2


def test_poles_to_coeffs_examples():
    np.testing.assert_allclose(dsp.poles_to_coeffs([0.9, 0.8]),
                               [1.0, -1.7, 0.72])
    assert dsp.poles_to_coeffs(PoleSet()).tolist() == [1.0]


def test_poles_to_coeffs_rejects_open_set():
    with pytest.raises(InvalidParamError):
        dsp.poles_to_coeffs([0.5 + 0.5j, 0.3])


def test_roots_coefficients_round_trip(rng):
    for trial in range(1000):
        degree = 1 + trial % 24
        poles = _random_conjugate_set(rng, degree)
        coeffs = dsp.poles_to_coeffs(poles)
        assert coeffs.dtype == np.float64
        recovered = dsp.poly_roots(coeffs)
        assert recovered.size == degree
        assert _match_error(poles, recovered) < 1e-6


def test_poly_roots_output_is_conjugate_closed(rng):
    for _ in range(100):
        a = dsp.poles_to_coeffs(_random_conjugate_set(rng, 20))
        assert dsp.is_conjugate_closed(dsp.poly_roots(a))


# Overlap-add
def test_overlap_add_constant_signal():
    x = AudioSignal(np.ones(FS), FS)
    frames = dsp.frame_signal(x, PARAMS) * dsp.hann_window(320)
    out = dsp.overlap_add(frames, PARAMS, FS, FS)
    assert out.shape == (FS,)
    np.testing.assert_allclose(out[1:], 1.0, atol=1e-6)


def test_overlap_add_single_frame(rng):
    params = FrameParams(win_ms=20, shift_ms=20)
    frame = rng.standard_normal(320)
    out = dsp.overlap_add([frame * dsp.hann_window(320)], params, 320, FS)
    np.testing.assert_allclose(out[1:], frame[1:], atol=1e-6)


def test_overlap_add_no_frames():
    assert dsp.overlap_add([], PARAMS, 50, FS).tolist() == [0.0] * 50


# Resampling
def test_resample_same_rate_is_identity(rng):
    audio = AudioSignal(rng.standard_normal(1000), FS)
    assert dsp.resample(audio, FS) is audio


def test_resample_ten_minutes_to_320_hz():
    audio = AudioSignal(np.zeros(600 * FS), FS)
    out = dsp.resample(audio, 320)
    assert out.sample_rate_hz == 320
    assert len(out) == 192_000


def test_resample_keeps_tone_frequency():
    t = np.arange(4 * FS) / FS
    out = dsp.resample(AudioSignal(np.sin(2 * np.pi * 50 * t), FS), 320)
    spectrum = np.abs(np.fft.rfft(out.samples))
    freqs = np.fft.rfftfreq(len(out), 1 / 320)
    assert freqs[np.argmax(spectrum)] == pytest.approx(50.0, abs=0.5)


def test_resample_rejects_bad_rate(rng):
    with pytest.raises(InvalidParamError):
        dsp.resample(AudioSignal(rng.standard_normal(10), FS), 0)


# Mel spectrograms
def test_mel_spectrogram_shape():
    mel = dsp.mel_spectrogram(AudioSignal(np.ones(2 * FS), FS), 128)
    assert (mel.bin_count, mel.frame_count) == (128, 198)


def test_mel_spectrogram_silence():
    mel = dsp.mel_spectrogram(AudioSignal(np.zeros(FS), FS))
    np.testing.assert_allclose(mel.values, np.log(1e-6))


def test_mel_spectrogram_tone_lands_near_1khz():
    t = np.arange(FS) / FS
    mel = dsp.mel_spectrogram(AudioSignal(np.sin(2 * np.pi * 1000 * t), FS))
    peaks = np.argmax(mel.values, axis=0)
    assert np.all(peaks == peaks[0])
    centers = dsp.mel_band_edges(FS, 128)[1:-1]
    nearest = np.argsort(np.abs(centers - 1000.0))[:2]
    assert peaks[0] in nearest


def test_mel_spectrogram_too_short():
    with pytest.raises(EmptyInputError):
        dsp.mel_spectrogram(AudioSignal(np.ones(399), FS))


def test_mel_filterbank_shape_properties():
    bank = dsp.mel_filterbank(FS, 512, 128)
    assert bank.shape == (128, 257)
    assert np.all(bank >= 0)
    for row in bank:
        nz = np.flatnonzero(row)
        if nz.size == 0:
            continue
        peak = nz[np.argmax(row[nz])]
        assert np.all(np.diff(row[:peak + 1]) >= 0)
        assert np.all(np.diff(row[peak:]) <= 0)
    centers = dsp.mel_band_edges(FS, 128)[1:-1]
    assert np.all(np.diff(centers) > 0)
