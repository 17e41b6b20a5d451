"""Waveform type and deterministic test-signal generators.

All generators return float64 mono waveforms in a nominal [-1, 1] range.
Durations are mapped to sample counts with ``round(dur * sample_rate)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, NeuralogramError

__all__ = [
    "Waveform",
    "gen_sine",
    "gen_linear_chirp",
    "gen_impulse_train",
    "resample",
]


@dataclass(frozen=True)
class Waveform:
    """Mono sample sequence with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise NeuralogramError("waveform samples must be 1-D")
        if self.sample_rate <= 0:
            raise NeuralogramError("sample_rate must be positive")
        if not np.isfinite(samples).all():
            raise NeuralogramError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def _n_samples(dur: float, sample_rate: int) -> int:
    if dur <= 0:
        raise NeuralogramError("duration must be positive")
    return int(round(dur * sample_rate))


def gen_sine(freq: float, dur: float, sample_rate: int, amp: float = 1.0) -> Waveform:
    """Pure sine: ``amp * sin(2*pi*freq*n/sample_rate)``.

    ``freq`` must lie strictly below the Nyquist frequency (0 Hz is
    allowed and yields silence).
    """
    if not 0 <= freq < sample_rate / 2:
        raise AliasingError(
            f"sine frequency {freq} Hz not in [0, {sample_rate / 2}) Hz"
        )
    n = np.arange(_n_samples(dur, sample_rate), dtype=np.float64)
    return Waveform(amp * np.sin(2.0 * np.pi * freq * n / sample_rate), sample_rate)


def gen_linear_chirp(f0: float, f1: float, dur: float, sample_rate: int,
                     amp: float = 1.0) -> Waveform:
    """Linear sweep from ``f0`` to ``f1`` Hz over ``dur`` seconds.

    Phase is ``2*pi*(f0*t + (f1 - f0)*t**2 / (2*dur))`` so the
    instantaneous frequency moves linearly from f0 to f1.  Endpoints up
    to and including Nyquist are accepted (a sweep may legitimately
    start or end at the band edge).
    """
    nyquist = sample_rate / 2
    for f in (f0, f1):
        if not 0 < f <= nyquist:
            raise AliasingError(
                f"chirp endpoint {f} Hz not in (0, {nyquist}] Hz"
            )
    n = _n_samples(dur, sample_rate)
    t = np.arange(n, dtype=np.float64) / sample_rate
    phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * dur))
    return Waveform(amp * np.sin(phase), sample_rate)


def gen_impulse_train(p0: float, p1: float, dur: float, sample_rate: int) -> Waveform:
    """Unit impulses whose period moves linearly from ``p0`` to ``p1`` s.

    With instantaneous period ``p(t) = p0 + (p1 - p0) * t / dur`` the
    accumulated rate is ``Phi(t) = integral of 1/p``; impulse ``i`` is
    placed where ``Phi(t) = i`` (closed form), with the first impulse at
    t = 0.  Impulses are emitted while their time is inside [0, dur).
    """
    if min(p0, p1) < 2.0 / sample_rate:
        raise NeuralogramError(
            f"impulse period below two samples ({2.0 / sample_rate:.6f} s)"
        )
    n = _n_samples(dur, sample_rate)
    k = (p1 - p0) / dur
    if k == 0.0:
        times = np.arange(0.0, dur, p0)
    else:
        # Phi(t) = ln(1 + k*t/p0) / k  ->  t_i = p0 * (exp(i*k) - 1) / k
        total = np.log1p(k * dur / p0) / k
        i = np.arange(0, int(np.floor(total)) + 2, dtype=np.float64)
        times = p0 * np.expm1(i * k) / k
        times = times[times < dur]
    samples = np.zeros(n, dtype=np.float64)
    idx = np.round(times * sample_rate).astype(np.int64)
    samples[idx[idx < n]] = 1.0
    return Waveform(samples, sample_rate)


_KAISER_BETA = 8.6
_TAPS_PER_SIDE = 32


def resample(wav: Waveform, target_rate: int) -> Waveform:
    """Windowed-sinc resampling to ``target_rate``.

    A Kaiser-windowed sinc low-pass at the smaller of the two Nyquist
    frequencies interpolates the signal on the new sample grid; output
    length is ``round(len * target / source)``.  Equal rates return the
    signal unchanged.
    """
    if target_rate <= 0:
        raise NeuralogramError("target_rate must be positive")
    src = wav.sample_rate
    if target_rate == src:
        return Waveform(wav.samples.copy(), src)
    x = wav.samples
    n_out = int(round(len(x) * target_rate / src))
    c = min(1.0, target_rate / src)          # cutoff relative to source Nyquist
    half = int(np.ceil(_TAPS_PER_SIDE / c))  # input samples per side
    out = np.empty(n_out, dtype=np.float64)
    # Pad so every tap window is in range.  Circular continuation keeps
    # the boundary spectrally quiet (no turn-on transient), which matters
    # when rejecting out-of-band content near the edges.
    reps = -(-half // max(1, len(x))) + 1
    xp = np.concatenate([np.tile(x, reps)[-half:] if half else x[:0],
                         x,
                         np.tile(x, reps)[: half + 1]])
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    i0_beta = np.i0(_KAISER_BETA)
    chunk = 65536
    for start in range(0, n_out, chunk):
        stop = min(start + chunk, n_out)
        t = np.arange(start, stop, dtype=np.float64) * (src / target_rate)
        center = np.floor(t).astype(np.int64)
        frac = t - center
        # tau: signed distance (in source samples) from output time to taps
        tau = offsets[None, :] - frac[:, None]
        u = tau / half
        window = np.where(
            np.abs(u) <= 1.0,
            np.i0(_KAISER_BETA * np.sqrt(np.maximum(0.0, 1.0 - u * u))) / i0_beta,
            0.0,
        )
        kern = c * np.sinc(c * tau) * window
        taps = xp[center[:, None] + (offsets[None, :].astype(np.int64) + half)]
        out[start:stop] = np.einsum("ij,ij->i", taps, kern)
    return Waveform(out, target_rate)
