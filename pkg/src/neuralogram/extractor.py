"""Stacked-embedding extraction: slide a context window over a signal,
run the trained network to the embedding layer for each window, and
stack the flattened embeddings as matrix columns over time.

Windowing is valid (no padding): ``n_frames = floor((dur - window_s) /
hop_s) + 1``.  Each window is processed independently as a batch of one,
in eval mode, so column j is bit-identical to the embedding of the
standalone clip ``wave[j*hop : j*hop + window]`` and repeated
extractions are bit-identical.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, network_from_checkpoint
from .errors import NeuralogramError, ShapeError
from .serialization import read_block, write_block
from .signals import Waveform, resample
from .stft import DESK_STFT, StftConfig, power_spectrogram
from .training import INPUT_TRANSFORM

MATRIX_MAGIC = b"NLGMAT01"
MATRIX_FORMAT_VERSION = 1

_EPS = 1e-9     # guards float slop in duration arithmetic


@dataclass(frozen=True)
class NeuralogramConfig:
    """Extraction parameters; ``layer=None`` uses the checkpoint default."""

    window_s: float = 2.0
    hop_s: float = 0.5
    layer: int | None = None

    def __post_init__(self) -> None:
        if self.window_s <= 0 or self.hop_s <= 0:
            raise NeuralogramError("window_s and hop_s must be positive")
        if self.hop_s > self.window_s + _EPS:
            raise NeuralogramError(
                f"hop ({self.hop_s}s) must not exceed window ({self.window_s}s)")


@dataclass(frozen=True)
class Neuralogram:
    """An N x n_frames matrix of stacked embeddings plus its geometry."""

    data: np.ndarray = field(repr=False)       # (N, n_frames) float32
    window_s: float
    hop_s: float
    source: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise NeuralogramError("matrix entries must be finite")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def frame_times(self) -> np.ndarray:
        """Window start times, seconds."""
        return np.arange(self.n_frames) * self.hop_s

    def frame_centers(self) -> np.ndarray:
        """Window center times, seconds."""
        return self.frame_times() + self.window_s / 2.0


def frame_count(dur: float, window_s: float = 2.0, hop_s: float = 0.5) -> int:
    """Number of valid window positions: floor((dur-window)/hop) + 1."""
    if window_s <= 0 or hop_s <= 0:
        raise NeuralogramError("window_s and hop_s must be positive")
    if dur + _EPS < window_s:
        raise ShapeError(
            f"signal of {dur:.6g}s is shorter than the {window_s:.6g}s window")
    return int(np.floor((dur - window_s) / hop_s + _EPS)) + 1


def window_starts(n_samples: int, sample_rate: float,
                  window_s: float = 2.0, hop_s: float = 0.5) -> np.ndarray:
    """Start sample of every window placement used by :func:`extract`.

    Starts are ``round(j * hop_s * sample_rate)`` with a one-sample
    clamp so the final window never overruns the signal.
    """
    win_len = round(window_s * sample_rate)
    n = frame_count(n_samples / sample_rate, window_s, hop_s)
    starts = np.empty(n, dtype=np.int64)
    for j in range(n):
        start = round(j * hop_s * sample_rate)
        if start + win_len > n_samples:         # float-rounding overrun guard
            if start + win_len - n_samples > 1:
                raise ShapeError("window placement overran the signal")
            start = n_samples - win_len
        starts[j] = start
    return starts


def _apply_input_transform(power: np.ndarray, name: str) -> np.ndarray:
    if name == INPUT_TRANSFORM:
        return np.log10(1.0 + power)
    raise NeuralogramError(f"unknown input transform {name!r} in checkpoint")


def extract(wave: Waveform, ckpt: Checkpoint,
            cfg: NeuralogramConfig = NeuralogramConfig()) -> Neuralogram:
    """Compute the stacked-embedding matrix of ``wave`` under ``ckpt``."""
    net = network_from_checkpoint(ckpt)
    layer = ckpt.embedding_layer_index if cfg.layer is None else int(cfg.layer)
    if not 0 <= layer < len(net.layers):
        raise ShapeError(
            f"layer index {layer} out of range for {len(net.layers)} layers")

    target_sr = float(ckpt.metadata.get("sample_rate", wave.sample_rate))
    if wave.sample_rate != target_sr:
        warnings.warn(
            f"resampling input from {wave.sample_rate:g} Hz to the "
            f"checkpoint's {target_sr:g} Hz", stacklevel=2)
        wave = resample(wave, target_sr)

    stft = StftConfig.from_dict(ckpt.metadata["stft"]) \
        if "stft" in ckpt.metadata else DESK_STFT
    transform = str(ckpt.metadata.get("input_transform", INPUT_TRANSFORM))

    sr = wave.sample_rate
    win_len = round(cfg.window_s * sr)
    x = wave.samples
    starts = window_starts(len(x), sr, cfg.window_s, cfg.hop_s)
    n = len(starts)
    emb_size = int(np.prod(net.shapes[layer + 1]))

    columns = np.empty((emb_size, n), dtype=np.float32)
    for j in range(n):
        start = int(starts[j])
        clip = Waveform(x[start: start + win_len], sr)
        spec = power_spectrogram(clip, stft)
        feats = _apply_input_transform(spec.data, transform).astype(np.float32)
        if (1,) + feats.shape != net.input_shape:
            raise ShapeError(
                f"window spectrogram shape {feats.shape} does not match the "
                f"network input {net.input_shape[1:]} — window_s must match "
                f"the training clip duration")
        emb = net.forward(feats[None, None, :, :], train=False, upto=layer)
        columns[:, j] = emb.reshape(-1)

    source = {
        "sample_rate": sr,
        "duration_s": wave.duration,
        "layer": layer,
        "embedding_size": emb_size,
        "input_transform": transform,
    }
    return Neuralogram(data=columns, window_s=cfg.window_s, hop_s=cfg.hop_s,
                       source=source)


# ---------------------------------------------------------------------------
# Persistence: binary (bit-exact) and CSV (f32-lossless decimal)
# ---------------------------------------------------------------------------


def save_neuralogram(ng: Neuralogram, path) -> None:
    """Binary container: magic NLGMAT01, JSON header, row-major f32."""
    data = np.ascontiguousarray(ng.data, dtype="<f4")
    header = {
        "format_version": MATRIX_FORMAT_VERSION,
        "rows": int(data.shape[0]),
        "cols": int(data.shape[1]),
        "window_s": ng.window_s,
        "hop_s": ng.hop_s,
        "dtype": "f32",
        "source": ng.source,
    }
    write_block(path, MATRIX_MAGIC, header, data.tobytes())


def load_neuralogram(path) -> Neuralogram:
    from .errors import CheckpointFormatError, CheckpointIntegrityError

    header, payload = read_block(path, MATRIX_MAGIC)
    try:
        version = int(header["format_version"])
        rows, cols = int(header["rows"]), int(header["cols"])
        window_s, hop_s = float(header["window_s"]), float(header["hop_s"])
    except (KeyError, TypeError, ValueError):
        raise CheckpointFormatError("malformed matrix header") from None
    if version != MATRIX_FORMAT_VERSION:
        from .errors import CheckpointVersionError
        raise CheckpointVersionError(
            f"unsupported matrix format version {version}")
    if rows * cols * 4 != len(payload):
        raise CheckpointIntegrityError(
            f"declared {rows}x{cols} float32s but payload holds "
            f"{len(payload)} bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    return Neuralogram(data=data, window_s=window_s, hop_s=hop_s,
                       source=dict(header.get("source", {})))


def save_neuralogram_csv(ng: Neuralogram, path) -> None:
    """CSV: a two-line header (column names, then values) and one row of
    %.9g-formatted entries per embedding dimension.  Nine significant
    digits round-trip float32 exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "frames", "window_s", "hop_s"])
        writer.writerow([ng.n_rows, ng.n_frames,
                         f"{ng.window_s:.17g}", f"{ng.hop_s:.17g}"])
        for row in ng.data:
            writer.writerow([f"{v:.9g}" for v in row])


def load_neuralogram_csv(path) -> Neuralogram:
    from .errors import CheckpointFormatError, CheckpointIntegrityError

    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            names = next(reader)
            values = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise CheckpointFormatError(f"unreadable matrix CSV: {exc}") from None
    if names != ["N", "frames", "window_s", "hop_s"]:
        raise CheckpointFormatError(
            f"unexpected CSV header {names!r}")
    try:
        n, frames = int(values[0]), int(values[1])
        window_s, hop_s = float(values[2]), float(values[3])
    except (IndexError, ValueError):
        raise CheckpointFormatError(
            f"malformed CSV header values {values!r}") from None
    if len(rows) != n or any(len(r) != frames for r in rows):
        raise CheckpointIntegrityError(
            f"CSV body does not match declared {n}x{frames} shape")
    data = np.array([[np.float32(v) for v in r] for r in rows],
                    dtype=np.float32)
    if n == 0 or frames == 0:
        data = data.reshape(n, frames)
    return Neuralogram(data=data, window_s=window_s, hop_s=hop_s, source={})
