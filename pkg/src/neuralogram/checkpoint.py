"""Model checkpoints: architecture + parameters + metadata, bit-exact.

File format: the shared container of :mod:`neuralogram.serialization`
with magic ``NLGCKPT1``.  The JSON header holds the format version, the
ordered layer specs, the embedding layer index, the input shape, a
tensor table (name, shape, byte offset into the payload), the RNG spec
used for training, and free-form metadata.  The payload is the raw
little-endian float32 tensor data, concatenated in table order.

The writer emits canonical JSON and no timestamps, so saving the same
model twice produces byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (CheckpointFormatError, CheckpointIntegrityError,
                     CheckpointVersionError, ShapeError)
from .layers import LayerSpec
from .network import Network
from .serialization import read_block, write_block

MAGIC = b"NLGCKPT1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """A trained (or freshly initialized) model, detached from buffers."""

    architecture: list[LayerSpec]
    embedding_layer_index: int
    input_shape: tuple[int, int, int]
    params: dict[str, np.ndarray]
    rng_spec: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        if not 0 <= self.embedding_layer_index < len(self.architecture):
            raise CheckpointIntegrityError(
                f"embedding layer index {self.embedding_layer_index} out of "
                f"range for {len(self.architecture)} layers")
        net = Network(self.architecture, self.input_shape)
        expected = dict(net.param_items())
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise CheckpointIntegrityError(
                f"parameter names inconsistent with architecture "
                f"(missing {missing}, unexpected {extra})")
        for name, arr in self.params.items():
            if arr.shape != expected[name].shape:
                raise CheckpointIntegrityError(
                    f"parameter {name}: shape {arr.shape} inconsistent with "
                    f"architecture (expected {expected[name].shape})")


def checkpoint_from_network(net: Network, embedding_layer_index: int,
                            rng_spec: dict | None = None,
                            metadata: dict | None = None) -> Checkpoint:
    params = {name: np.array(p, dtype=np.float32)
              for name, p in net.param_items()}
    return Checkpoint(
        architecture=list(net.specs),
        embedding_layer_index=int(embedding_layer_index),
        input_shape=net.input_shape,
        params=params,
        rng_spec=dict(rng_spec or {}),
        metadata=dict(metadata or {}),
    )


def network_from_checkpoint(ckpt: Checkpoint) -> Network:
    if not 0 <= ckpt.embedding_layer_index < len(ckpt.architecture):
        raise CheckpointIntegrityError(
            f"embedding layer index {ckpt.embedding_layer_index} out of "
            f"range for {len(ckpt.architecture)} layers")
    net = Network(ckpt.architecture, ckpt.input_shape)
    expected = {name for name, _ in net.param_items()}
    if expected != set(ckpt.params):
        missing = sorted(expected - set(ckpt.params))
        extra = sorted(set(ckpt.params) - expected)
        raise CheckpointIntegrityError(
            f"parameter names inconsistent with architecture "
            f"(missing {missing}, unexpected {extra})")
    try:
        for name, arr in ckpt.params.items():
            net.set_param(name, arr.astype(np.float32, copy=False))
    except ShapeError as exc:
        raise CheckpointIntegrityError(str(exc)) from None
    return net


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    ckpt.validate()
    names = sorted(ckpt.params)
    table = []
    chunks = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
        raw = arr.tobytes()
        table.append({"name": name, "shape": list(arr.shape),
                      "dtype": "f32", "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format_version": ckpt.format_version,
        "architecture": [s.to_dict() for s in ckpt.architecture],
        "embedding_layer_index": ckpt.embedding_layer_index,
        "input_shape": list(ckpt.input_shape),
        "tensors": table,
        "rng": ckpt.rng_spec,
        "metadata": ckpt.metadata,
    }
    write_block(path, MAGIC, header, b"".join(chunks))


def load_checkpoint(path) -> Checkpoint:
    header, payload = read_block(path, MAGIC)
    try:
        version = int(header["format_version"])
    except (KeyError, TypeError, ValueError):
        raise CheckpointFormatError("header lacks a format_version") from None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint format version {version} "
            f"(this build reads version {FORMAT_VERSION})")
    try:
        arch = [LayerSpec.from_dict(d) for d in header["architecture"]]
        emb = int(header["embedding_layer_index"])
        input_shape = tuple(int(v) for v in header["input_shape"])
        table = header["tensors"]
        rng_spec = dict(header.get("rng", {}))
        metadata = dict(header.get("metadata", {}))
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise CheckpointFormatError(f"malformed header: {exc}") from None

    params: dict[str, np.ndarray] = {}
    for entry in table:
        try:
            name = str(entry["name"])
            shape = tuple(int(v) for v in entry["shape"])
            off = int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise CheckpointFormatError(
                f"malformed tensor table entry: {entry!r}") from None
        count = int(np.prod(shape)) if shape else 1
        end = off + 4 * count
        if off < 0 or end > len(payload):
            raise CheckpointIntegrityError(
                f"tensor {name}: declared {count} float32s at offset {off} "
                f"but payload holds {len(payload)} bytes")
        params[name] = np.frombuffer(
            payload[off:end], dtype="<f4").reshape(shape).copy()

    ckpt = Checkpoint(architecture=arch, embedding_layer_index=emb,
                      input_shape=input_shape, params=params,
                      rng_spec=rng_spec, metadata=metadata,
                      format_version=version)
    ckpt.validate()
    return ckpt
