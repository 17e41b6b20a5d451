"""Seeded multi-label synthetic audio corpus.

Eight generator classes with randomized parameters, mixed 1..max_active
per clip and peak-normalized.  Everything is a pure function of
(seed, clip index): clip i draws only from ``Rng(seed).child(i)``, so
corpora are reproducible bit-for-bit and can be generated in any order.

Class parameter ranges (sample_rate 8000 Hz assumed for the defaults;
all frequencies stay below Nyquist for rates >= 8 kHz):

==============  ========================================================
sine            frequency 100..3500 Hz
harmonic_tone   f0 80..400 Hz, 3..6 harmonics, amplitude 1/h, random phase
chirp_up        100..1000 Hz rising to 1500..3800 Hz over the clip
chirp_down      1500..3800 Hz falling to 100..1000 Hz
white_noise     uniform samples on [-1, 1]
am_tone         carrier 500..3000 Hz, AM rate 2..16 Hz, depth 0.5..1
impulse_train   constant period 0.02..0.2 s (5..50 impulses/s)
filtered_noise  white noise band-passed to a random 200..1500 Hz band
==============  ========================================================
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import write_wav
from .errors import NeuralogramError
from .rng import Rng
from .signals import (Waveform, gen_impulse_train, gen_linear_chirp, gen_sine)

CLASS_NAMES = ("sine", "harmonic_tone", "chirp_up", "chirp_down",
               "white_noise", "am_tone", "impulse_train", "filtered_noise")


@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for a deterministic corpus."""

    classes: tuple[str, ...] = CLASS_NAMES
    n_clips: int = 2000
    clip_dur: float = 2.0
    sample_rate: float = 8000.0
    max_active: int = 2
    seed: int = 42

    def __post_init__(self) -> None:
        unknown = [c for c in self.classes if c not in CLASS_NAMES]
        if unknown:
            raise NeuralogramError(f"unknown corpus classes: {unknown}")
        if len(set(self.classes)) != len(self.classes):
            raise NeuralogramError("corpus classes must be unique")
        if not self.classes:
            raise NeuralogramError("corpus needs at least one class")
        if not 1 <= self.max_active <= len(self.classes):
            raise NeuralogramError(
                f"max_active must be in [1, {len(self.classes)}], "
                f"got {self.max_active}")
        if self.n_clips <= 0:
            raise NeuralogramError("n_clips must be positive")
        if self.clip_dur <= 0 or self.sample_rate <= 0:
            raise NeuralogramError("clip_dur and sample_rate must be positive")

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "n_clips": self.n_clips,
                "clip_dur": self.clip_dur, "sample_rate": self.sample_rate,
                "max_active": self.max_active, "seed": self.seed}

    @staticmethod
    def from_dict(d: dict) -> "CorpusSpec":
        return CorpusSpec(
            classes=tuple(d.get("classes", CLASS_NAMES)),
            n_clips=int(d.get("n_clips", 2000)),
            clip_dur=float(d.get("clip_dur", 2.0)),
            sample_rate=float(d.get("sample_rate", 8000.0)),
            max_active=int(d.get("max_active", 2)),
            seed=int(d.get("seed", 42)),
        )


@dataclass(frozen=True)
class LabeledClip:
    """One mixed clip plus its multi-hot class labels."""

    wave: Waveform
    labels: np.ndarray = field(repr=False)      # float32 multi-hot

    def __post_init__(self) -> None:
        if self.labels.sum() < 1:
            raise NeuralogramError("clip must have at least one active label")


def _uniform(rng: Rng, lo: float, hi: float) -> float:
    return float(rng.uniform_range(lo, hi, 1)[0])


def _gen_sine(rng, dur, sr):
    return gen_sine(_uniform(rng, 100.0, 3500.0), dur, sr).samples


def _gen_harmonic_tone(rng, dur, sr):
    f0 = _uniform(rng, 80.0, 400.0)
    n_harm = int(rng.integers(3, 7, 1)[0])      # 3..6 harmonics
    t = np.arange(round(dur * sr)) / sr
    out = np.zeros_like(t)
    phases = rng.uniform(n_harm) * 2 * np.pi
    for h in range(1, n_harm + 1):
        if h * f0 >= sr / 2:
            break
        out += np.sin(2 * np.pi * h * f0 * t + phases[h - 1]) / h
    return out


def _gen_chirp_up(rng, dur, sr):
    f0 = _uniform(rng, 100.0, 1000.0)
    f1 = _uniform(rng, 1500.0, 3800.0)
    return gen_linear_chirp(f0, f1, dur, sr).samples


def _gen_chirp_down(rng, dur, sr):
    f1 = _uniform(rng, 100.0, 1000.0)
    f0 = _uniform(rng, 1500.0, 3800.0)
    return gen_linear_chirp(f0, f1, dur, sr).samples


def _gen_white_noise(rng, dur, sr):
    return rng.uniform(round(dur * sr)) * 2.0 - 1.0


def _gen_am_tone(rng, dur, sr):
    carrier = _uniform(rng, 500.0, 3000.0)
    rate = _uniform(rng, 2.0, 16.0)
    depth = _uniform(rng, 0.5, 1.0)
    phase = _uniform(rng, 0.0, 2 * np.pi)
    t = np.arange(round(dur * sr)) / sr
    envelope = 1.0 - depth * (0.5 + 0.5 * np.sin(2 * np.pi * rate * t + phase))
    return envelope * np.sin(2 * np.pi * carrier * t)


def _gen_impulse_train(rng, dur, sr):
    period = _uniform(rng, 0.02, 0.2)
    return gen_impulse_train(period, period, dur, sr).samples


def _gen_filtered_noise(rng, dur, sr):
    lo = _uniform(rng, 100.0, 2000.0)
    width = _uniform(rng, 200.0, 1500.0)
    hi = min(lo + width, sr / 2)
    noise = rng.uniform(round(dur * sr)) * 2.0 - 1.0
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(len(noise), d=1.0 / sr)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spectrum, n=len(noise))
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


_GENERATORS = {
    "sine": _gen_sine,
    "harmonic_tone": _gen_harmonic_tone,
    "chirp_up": _gen_chirp_up,
    "chirp_down": _gen_chirp_down,
    "white_noise": _gen_white_noise,
    "am_tone": _gen_am_tone,
    "impulse_train": _gen_impulse_train,
    "filtered_noise": _gen_filtered_noise,
}


def make_clip(spec: CorpusSpec, index: int) -> LabeledClip:
    """Generate clip ``index`` of the corpus (independent of the others).

    The first ("primary") class cycles round-robin with the clip index so
    the corpus stays balanced; any additional mixture classes are drawn
    at random from the rest.  Both are deterministic in (seed, index).
    """
    rng = Rng(spec.seed).child(index)
    k = len(spec.classes)
    n_active = int(rng.integers(1, spec.max_active + 1, 1)[0])
    primary = index % k
    others = [c for c in range(k) if c != primary]
    extra = rng.choice(k - 1, n_active - 1)
    chosen = sorted([primary] + [others[int(j)] for j in extra])
    gains = 0.5 + 0.5 * rng.uniform(n_active)

    n_samples = round(spec.clip_dur * spec.sample_rate)
    mix = np.zeros(n_samples)
    labels = np.zeros(k, dtype=np.float32)
    for gain, ci in zip(gains, chosen):
        name = spec.classes[ci]
        component = _GENERATORS[name](rng, spec.clip_dur, spec.sample_rate)
        mix += gain * component
        labels[ci] = 1.0

    peak = np.max(np.abs(mix))
    if peak > 0:
        mix *= 0.9 / peak
    return LabeledClip(wave=Waveform(mix, spec.sample_rate), labels=labels)


def make_corpus(spec: CorpusSpec) -> list[LabeledClip]:
    """All clips of the corpus, deterministic in (seed, index)."""
    return [make_clip(spec, i) for i in range(spec.n_clips)]


def label_matrix(corpus: list[LabeledClip]) -> np.ndarray:
    return np.stack([clip.labels for clip in corpus])


def export_corpus(corpus: list[LabeledClip], spec: CorpusSpec, out_dir) -> Path:
    """Write clips as WAV files plus a CSV manifest; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "filename", *spec.classes])
        for i, clip in enumerate(corpus):
            filename = f"clip_{i:05d}.wav"
            write_wav(clip.wave, out / filename)
            writer.writerow([i, filename, *(int(v) for v in clip.labels)])
    return manifest
