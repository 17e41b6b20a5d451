"""Linear spectrogram transforms: mel, chroma, and learned maps.

A transform is an ``M x n_bins`` matrix applied to spectrogram columns.
``learn_transform`` recovers such a matrix from (input, output) column
pairs with ridge-regularized least squares in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FilterbankError, ShapeError, SingularTransformError
from .stft import Spectrogram

__all__ = [
    "LinearTransform",
    "mel_of_hz",
    "mel_filterbank",
    "chroma_matrix",
    "apply_transform",
    "learn_transform",
    "save_transform_csv",
    "load_transform_csv",
]


@dataclass(frozen=True)
class LinearTransform:
    """Named linear map of spectrogram columns."""

    matrix: np.ndarray
    name: str = "transform"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ShapeError("transform matrix must be 2-D")
        if not np.isfinite(m).all():
            raise ShapeError("transform matrix contains non-finite entries")


def mel_of_hz(f):
    """Mel value of frequency ``f`` Hz: ``2595 * log10(1 + f/700)``."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _hz_of_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_bins: int, sample_rate: int) -> LinearTransform:
    """Triangular mel filterbank, ``n_mels x n_bins``, unnormalized.

    Filter peaks are equally spaced on the mel scale between 0 Hz and
    Nyquist; each row is a triangle over FFT bin center frequencies.
    """
    if n_mels < 1:
        raise FilterbankError("n_mels must be >= 1")
    nyquist = sample_rate / 2.0
    # Bin center frequencies for an FFT with n_bins = fft/2 + 1.
    bin_hz = np.arange(n_bins) * (nyquist / (n_bins - 1))
    anchors = _hz_of_mel(np.linspace(0.0, mel_of_hz(nyquist), n_mels + 2))
    matrix = np.zeros((n_mels, n_bins), dtype=np.float64)
    for i in range(n_mels):
        lo, mid, hi = anchors[i], anchors[i + 1], anchors[i + 2]
        rising = (bin_hz - lo) / max(mid - lo, 1e-12)
        falling = (hi - bin_hz) / max(hi - mid, 1e-12)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        if not np.any(tri > 0.0):
            raise FilterbankError(
                f"mel filter {i} is empty: {n_mels} filters exceed the "
                f"resolution of {n_bins} bins"
            )
        matrix[i] = tri
    return LinearTransform(matrix, name=f"mel{n_mels}")


def chroma_matrix(n_bins: int, sample_rate: int,
                  ref_hz: float = 261.625565) -> LinearTransform:
    """12 x n_bins binary pitch-class folding matrix.

    Bin ``k > 0`` at frequency ``f_k`` is assigned to pitch class
    ``round(12*log2(f_k/ref_hz)) mod 12``; the DC bin belongs to no
    class (all-zero column).
    """
    if ref_hz <= 0:
        raise ShapeError("ref_hz must be positive")
    nyquist = sample_rate / 2.0
    bin_hz = np.arange(n_bins) * (nyquist / (n_bins - 1))
    matrix = np.zeros((12, n_bins), dtype=np.float64)
    classes = np.round(
        12.0 * np.log2(bin_hz[1:] / ref_hz)
    ).astype(np.int64) % 12
    matrix[classes, np.arange(1, n_bins)] = 1.0
    return LinearTransform(matrix, name="chroma12")


def apply_transform(t: LinearTransform, spec):
    """Apply ``t`` to every column of a spectrogram (or raw matrix)."""
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    if data.ndim != 2 or t.matrix.shape[1] != data.shape[0]:
        raise ShapeError(
            f"transform expects {t.matrix.shape[1]} rows, "
            f"got matrix of shape {getattr(data, 'shape', None)}"
        )
    return t.matrix @ data


def learn_transform(inputs, targets, ridge: float = 0.0,
                    name: str = "learned") -> LinearTransform:
    """Least-squares recovery of T from column pairs (x_i, y_i = T x_i).

    Solves ``min_T sum ||T x - y||^2 + ridge * ||T||_F^2`` via the normal
    equations ``T = Y X' (X X' + ridge I)^{-1}``.
    """
    x = np.column_stack([np.asarray(c, dtype=np.float64).ravel() for c in inputs])
    y = np.column_stack([np.asarray(c, dtype=np.float64).ravel() for c in targets])
    if x.shape[1] != y.shape[1]:
        raise ShapeError("inputs and targets must pair up one to one")
    if ridge < 0:
        raise ShapeError("ridge must be >= 0")
    d = x.shape[0]
    gram = x @ x.T
    if ridge > 0:
        gram = gram + ridge * np.eye(d)
    elif np.linalg.matrix_rank(gram) < d:
        raise SingularTransformError(
            f"normal matrix is singular ({x.shape[1]} columns for "
            f"{d} bins); pass ridge > 0 to regularize"
        )
    solution = np.linalg.solve(gram, x @ y.T)
    return LinearTransform(solution.T, name=name)


def save_transform_csv(t: LinearTransform, path) -> None:
    """Write a transform as CSV: first line ``rows,cols``, then rows."""
    m = t.matrix
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{m.shape[0]},{m.shape[1]}\n")
        for row in m:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_transform_csv(path, name: str | None = None) -> LinearTransform:
    """Read a transform written by :func:`save_transform_csv`."""
    path = Path(path)
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip().split(",")
        if len(header) != 2:
            raise ShapeError(f"{path}: malformed transform header")
        rows, cols = int(header[0]), int(header[1])
        m = np.loadtxt(f, delimiter=",", ndmin=2)
    if m.shape != (rows, cols):
        raise ShapeError(
            f"{path}: header says {rows}x{cols}, data is {m.shape}"
        )
    return LinearTransform(m, name=name or path.stem)
