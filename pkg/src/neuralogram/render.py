"""Grayscale PGM rendering of matrices (neuralograms, spectrograms).

Binary 8-bit P5 images, matrix rows top-to-bottom.  Values map through
``round(255 * norm(v))`` where ``norm`` rescales either the raw values
(linear) or their clamped ``log10`` (a decibel-style floor below the
maximum).  Normalization ranges are taken over the whole matrix or per
row; a zero range maps to black.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NeuralogramError, ShapeError

SCALES = ("linear", "log10-clamped")
COLORMAPS = ("gray",)
NORMALIZES = ("global", "per-row")


@dataclass(frozen=True)
class RenderSpec:
    """How to map matrix values to 8-bit gray pixels."""

    scale: str = "linear"
    floor_db: float = -60.0
    colormap: str = "gray"
    normalize: str = "global"

    def __post_init__(self) -> None:
        if self.scale not in SCALES:
            raise NeuralogramError(f"scale must be one of {SCALES}")
        if self.colormap not in COLORMAPS:
            raise NeuralogramError(f"colormap must be one of {COLORMAPS}")
        if self.normalize not in NORMALIZES:
            raise NeuralogramError(f"normalize must be one of {NORMALIZES}")
        if self.scale == "log10-clamped" and self.floor_db >= 0:
            raise NeuralogramError("floor_db must be negative for log scale")


def _normalize(values: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1] along the last axis; zero range maps to 0."""
    lo = values.min(axis=-1, keepdims=True)
    hi = values.max(axis=-1, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (values - lo) / safe, 0.0)


def render_matrix(matrix: np.ndarray, spec: RenderSpec, path) -> None:
    """Write ``matrix`` as a binary PGM image at ``path``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ShapeError(f"need a nonempty 2-D matrix, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise NeuralogramError("matrix entries must be finite")

    if spec.scale == "log10-clamped":
        # floor_db is a power ratio in dB: 10*log10(v/v_max) >= floor_db
        with np.errstate(divide="ignore"):
            levels = np.log10(matrix, where=matrix > 0,
                              out=np.full_like(matrix, -np.inf))
        top = levels.max() if spec.normalize == "global" \
            else levels.max(axis=1, keepdims=True)
        floor = top + spec.floor_db / 10.0
        values = np.maximum(levels, floor)
        if np.any(np.isinf(values)):        # all-zero matrix or row
            values = np.where(np.isinf(values), 0.0, values)
    else:
        values = matrix

    if spec.normalize == "global":
        norm = _normalize(values.reshape(1, -1)).reshape(values.shape)
    else:
        norm = _normalize(values)
    pixels = np.rint(255.0 * norm).astype(np.uint8)

    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM back into a (rows, cols) uint8 array."""
    blob = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(blob):
        if blob[pos: pos + 1].isspace():
            pos += 1
        elif blob[pos: pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(blob) and not blob[end: end + 1].isspace():
                end += 1
            tokens.append(blob[pos:end])
            pos = end
    if len(tokens) != 4 or tokens[0] != b"P5" or tokens[3] != b"255":
        raise NeuralogramError(f"{path}: not an 8-bit binary PGM")
    width, height = int(tokens[1]), int(tokens[2])
    payload = blob[pos + 1:]
    if len(payload) != width * height:
        raise NeuralogramError(
            f"{path}: payload is {len(payload)} bytes, "
            f"expected {width * height}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
