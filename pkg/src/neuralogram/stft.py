"""Short-time Fourier transform power spectrograms.

The canonical spectrogram is the squared magnitude of the windowed FFT,
bins 0..fft_size/2 (inclusive), power — not dB.  Two padding modes:

* ``center``: frame m is centered at sample ``m*hop`` (reflect padding
  at the edges); frame count is ``ceil(len / hop)``.
* ``valid``: only fully interior windows; count ``(len-win)//hop + 1``.

The default configuration (30 ms hann window, 10 ms hop, 256-point FFT)
turns a 2 s clip at 8 kHz into a 129x200 matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NeuralogramError, ShapeError
from .signals import Waveform

__all__ = ["StftConfig", "Spectrogram", "power_spectrogram", "DESK_STFT"]


@dataclass(frozen=True)
class StftConfig:
    """STFT parameterization (times in milliseconds)."""

    window_ms: float = 30.0
    hop_ms: float = 10.0
    fft_size: int = 256
    window_fn: str = "hann"
    padding: str = "center"

    def __post_init__(self):
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise NeuralogramError("window_ms and hop_ms must be positive")
        if self.hop_ms > self.window_ms:
            raise NeuralogramError("hop_ms must not exceed window_ms")
        if self.fft_size <= 0 or (self.fft_size & (self.fft_size - 1)) != 0:
            raise NeuralogramError("fft_size must be a positive power of two")
        if self.window_fn not in ("hann", "rectangular"):
            raise NeuralogramError(f"unknown window_fn {self.window_fn!r}")
        if self.padding not in ("center", "valid"):
            raise NeuralogramError(f"unknown padding {self.padding!r}")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def to_dict(self) -> dict:
        return {"window_ms": self.window_ms, "hop_ms": self.hop_ms,
                "fft_size": self.fft_size, "window_fn": self.window_fn,
                "padding": self.padding}

    @classmethod
    def from_dict(cls, d: dict) -> "StftConfig":
        return cls(**d)


DESK_STFT = StftConfig()


@dataclass(frozen=True)
class Spectrogram:
    """Nonnegative power matrix, ``n_bins x n_frames``."""

    data: np.ndarray
    bin_hz: float
    hop_s: float

    @property
    def n_bins(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


def _frame_signal(x: np.ndarray, win: int, hop: int, padding: str) -> np.ndarray:
    """Return the (n_frames, win) frame matrix for the given padding mode."""
    n = len(x)
    if padding == "valid":
        if n < win:
            raise ShapeError(
                f"signal of {n} samples shorter than {win}-sample window"
            )
        n_frames = (n - win) // hop + 1
        padded = x
        starts_at = 0
    else:
        n_frames = -(-n // hop)  # ceil
        left = win // 2
        need = (n_frames - 1) * hop + win
        right = max(0, need - n - left)
        if n <= max(left, right):
            raise ShapeError(
                f"signal of {n} samples too short to reflect-pad by "
                f"{max(left, right)}"
            )
        padded = np.pad(x, (left, right), mode="reflect")
        starts_at = 0
    view = np.lib.stride_tricks.sliding_window_view(padded, win)
    return view[starts_at::hop][:n_frames]


def power_spectrogram(wav: Waveform, cfg: StftConfig = DESK_STFT) -> Spectrogram:
    """Squared-magnitude STFT of ``wav`` under configuration ``cfg``."""
    sr = wav.sample_rate
    win = cfg.window_samples(sr)
    hop = cfg.hop_samples(sr)
    if win > cfg.fft_size:
        raise NeuralogramError(
            f"{win}-sample window exceeds fft_size {cfg.fft_size}"
        )
    if hop < 1 or win < 1:
        raise NeuralogramError("window/hop too small at this sample rate")
    frames = _frame_signal(wav.samples, win, hop, cfg.padding)
    if cfg.window_fn == "hann":
        frames = frames * np.hanning(win)
    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = (spectrum.real ** 2 + spectrum.imag ** 2).T
    return Spectrogram(
        data=np.ascontiguousarray(power),
        bin_hz=sr / cfg.fft_size,
        hop_s=hop / sr,
    )
