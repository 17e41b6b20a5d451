"""WAV file I/O: 16-bit PCM mono, little-endian, canonical header.

Floats are quantized with ``round(x * 32767)`` and saturated to the
int16 range; reading maps back with ``x / 32767``.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import NeuralogramError
from .signals import Waveform

__all__ = ["read_wav", "write_wav"]


def write_wav(wav: Waveform, path) -> None:
    """Write ``wav`` as 16-bit PCM mono."""
    q = np.round(wav.samples * 32767.0)
    q = np.clip(q, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(wav.sample_rate)
        f.writeframes(q.tobytes())


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file."""
    path = Path(path)
    if not path.exists():
        raise NeuralogramError(f"no such file: {path}")
    try:
        with wave.open(str(path), "rb") as f:
            if f.getnchannels() != 1:
                raise NeuralogramError(
                    f"{path}: expected mono, got {f.getnchannels()} channels"
                )
            if f.getsampwidth() != 2:
                raise NeuralogramError(
                    f"{path}: expected 16-bit PCM, got "
                    f"{8 * f.getsampwidth()}-bit"
                )
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as exc:
        raise NeuralogramError(f"{path}: not a valid WAV file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return Waveform(samples, rate)
