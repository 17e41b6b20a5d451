"""Tests for signal generators and the resampler."""

import numpy as np
import pytest

from neuralogram.errors import AliasingError, NeuralogramError
from neuralogram.signals import (
    Waveform,
    gen_impulse_train,
    gen_linear_chirp,
    gen_sine,
    resample,
)
from neuralogram.stft import StftConfig, power_spectrogram


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


# --- gen_sine ---------------------------------------------------------------

def test_sine_length():
    assert len(gen_sine(440, 1.0, 8000)) == 8000


def test_sine_zero_freq_is_silence():
    assert np.all(gen_sine(0, 1.0, 8000).samples == 0.0)


def test_sine_rms():
    assert abs(rms(gen_sine(440, 1.0, 8000).samples) - 1 / np.sqrt(2)) < 1e-3


def test_sine_rejects_nyquist_and_above():
    with pytest.raises(AliasingError):
        gen_sine(4000, 1.0, 8000)
    with pytest.raises(AliasingError):
        gen_sine(5000, 1.0, 8000)
    with pytest.raises(AliasingError):
        gen_sine(-10, 1.0, 8000)


def test_sine_amp_scales():
    w = gen_sine(100, 0.5, 8000, amp=0.25)
    assert abs(w.samples.max() - 0.25) < 1e-6


# --- gen_linear_chirp -------------------------------------------------------

def test_chirp_zero_sweep_equals_sine():
    a = gen_linear_chirp(440, 440, 1.0, 8000)
    b = gen_sine(440, 1.0, 8000)
    assert np.allclose(a.samples, b.samples, atol=1e-9)


def test_chirp_accepts_nyquist_endpoint():
    w = gen_linear_chirp(4000, 1, 2.0, 8000)
    assert len(w) == 16000


def test_chirp_rejects_zero_and_beyond_nyquist():
    with pytest.raises(AliasingError):
        gen_linear_chirp(0, 100, 1.0, 8000)
    with pytest.raises(AliasingError):
        gen_linear_chirp(100, 4001, 1.0, 8000)


def test_chirp_midpoint_instantaneous_frequency():
    # Linear sweep 100 -> 200 Hz over 10 s: at t = 5 s the instantaneous
    # frequency is 150 Hz; STFT argmax at that time must agree within a bin.
    w = gen_linear_chirp(100, 200, 10.0, 8000)
    spec = power_spectrogram(w, StftConfig())
    frame = int(round(5.0 / spec.hop_s))
    peak_hz = np.argmax(spec.data[:, frame]) * spec.bin_hz
    assert abs(peak_hz - 150.0) <= spec.bin_hz


# --- gen_impulse_train ------------------------------------------------------

def test_impulse_train_constant_period():
    w = gen_impulse_train(0.1, 0.1, 1.05, 8000)
    idx = np.flatnonzero(w.samples)
    assert len(idx) == 11
    assert np.array_equal(idx, np.arange(11) * 800)


def test_impulse_train_count_matches_numeric_integration():
    # Oracle: integrate the instantaneous rate 1/p(t) numerically and
    # count integer crossings (+1 for the impulse at t = 0).
    p0, p1, dur, sr = 0.1, 0.05, 1.0, 8000
    t = np.linspace(0.0, dur, 2_000_001)
    rate = 1.0 / (p0 + (p1 - p0) * t / dur)
    total = np.trapezoid(rate, t)
    expected = 1 + int(np.floor(total))
    w = gen_impulse_train(p0, p1, dur, sr)
    assert int(np.sum(w.samples > 0)) == expected


def test_impulse_train_accelerating_spacing_shrinks():
    w = gen_impulse_train(0.05, 0.01, 2.0, 8000)
    idx = np.flatnonzero(w.samples)
    gaps = np.diff(idx)
    assert gaps[0] > gaps[-1]
    assert w.samples[0] == 1.0


def test_impulse_train_rejects_subsample_period():
    with pytest.raises(NeuralogramError):
        gen_impulse_train(0.0001, 0.1, 1.0, 8000)


# --- resample ---------------------------------------------------------------

def test_resample_identity_rate():
    w = gen_sine(440, 0.5, 8000)
    r = resample(w, 8000)
    assert r.sample_rate == 8000
    assert rms(r.samples - w.samples) < 1e-6


def test_resample_output_length():
    w = gen_sine(440, 1.0, 16000)
    assert len(resample(w, 8000)) == 8000
    assert len(resample(w, 11025)) == 11025


def test_resample_preserves_in_band_tone():
    w = gen_sine(440, 1.0, 16000)
    r = resample(w, 8000)
    spec = power_spectrogram(r, StftConfig())
    mid = spec.data[:, spec.n_frames // 2]
    peak_hz = np.argmax(mid) * spec.bin_hz
    assert abs(peak_hz - 440.0) <= spec.bin_hz
    # Amplitude essentially preserved (interior, away from edge taper).
    assert abs(rms(r.samples[800:-800]) - 1 / np.sqrt(2)) < 0.01


def test_resample_rejects_out_of_band_tone():
    w = gen_sine(6000, 1.0, 16000)
    r = resample(w, 8000)
    assert rms(r.samples) < 0.001


def test_resample_invalid_rate():
    with pytest.raises(NeuralogramError):
        resample(gen_sine(100, 0.1, 8000), 0)


# --- Waveform ---------------------------------------------------------------

def test_waveform_rejects_nonfinite():
    with pytest.raises(NeuralogramError):
        Waveform(np.array([0.0, np.nan]), 8000)


def test_waveform_duration():
    assert gen_sine(10, 2.0, 8000).duration == pytest.approx(2.0)
