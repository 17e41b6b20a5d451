"""Sequential network: construction from layer specs, presets, training
passes and a finite-difference gradient checker.

Public tensors are NCHW (see :mod:`neuralogram.layers`); the network
transposes to the internal channel-major layout once on entry.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .layers import (Conv2D, Dense, Dropout, Layer, LayerSpec, MaxPool2D,
                     ReLU, Softmax, conv_spec, dense_spec, dropout_spec,
                     euclid_softmax_loss, pool_spec, relu_spec, softmax_spec)
from .rng import Rng


def _build_layer(spec: LayerSpec, in_shape: tuple[int, ...]) -> Layer:
    if spec.kind == "conv2d":
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d needs a (C, H, W) input, got {in_shape}")
        return Conv2D(spec, in_channels=in_shape[0])
    if spec.kind == "maxpool2d":
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool2d needs a (C, H, W) input, got {in_shape}")
        return MaxPool2D(spec)
    if spec.kind == "relu":
        return ReLU(spec)
    if spec.kind == "dense":
        return Dense(spec, in_features=int(np.prod(in_shape)))
    if spec.kind == "dropout":
        return Dropout(spec)
    if spec.kind == "softmax":
        return Softmax(spec)
    raise ShapeError(f"unknown layer kind {spec.kind!r}")


class Network:
    """A sequential stack of layers built from :class:`LayerSpec` entries.

    ``input_shape`` is the per-sample shape (C, H, W).  Parameters start
    as zeros; call :meth:`init_params` (or load a checkpoint) before use.
    """

    def __init__(self, specs: list[LayerSpec], input_shape: tuple[int, int, int]):
        if len(input_shape) != 3:
            raise ShapeError(f"input_shape must be (C, H, W), got {input_shape}")
        self.specs = list(specs)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers: list[Layer] = []
        self.shapes: list[tuple[int, ...]] = [self.input_shape]
        shape = self.input_shape
        for spec in self.specs:
            layer = _build_layer(spec, shape)
            shape = layer.out_shape(shape)
            self.layers.append(layer)
            self.shapes.append(shape)
        self.output_shape = shape
        self.dtype = np.dtype(np.float32)

    # -- parameters ---------------------------------------------------------

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """Ordered (name, array) pairs; names are 'layerNN.param'."""
        out = []
        for i, layer in enumerate(self.layers):
            for pname in layer.param_names():
                out.append((f"layer{i:02d}.{pname}", layer.get_param(pname)))
        return out

    def grad_items(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for pname in layer.param_names():
                out.append((f"layer{i:02d}.{pname}", layer.get_grad(pname)))
        return out

    def set_param(self, name: str, value: np.ndarray) -> None:
        layer_part, _, pname = name.partition(".")
        try:
            idx = int(layer_part.removeprefix("layer"))
            layer = self.layers[idx]
        except (ValueError, IndexError):
            raise ShapeError(f"no such parameter {name!r}") from None
        if pname not in layer.param_names():
            raise ShapeError(f"no such parameter {name!r}")
        layer.set_param(pname, value)

    def n_params(self) -> int:
        return sum(p.size for _, p in self.param_items())

    def init_params(self, rng: Rng, dtype=np.float32) -> None:
        """Initialize every parameter layer in order from ``rng``."""
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            layer.init_params(rng, self.dtype)

    def astype(self, dtype) -> "Network":
        """Cast all parameters (in place) and return self."""
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            for pname in layer.param_names():
                layer.set_param(pname, layer.get_param(pname).astype(dtype))
            layer.release_buffers()
        return self

    def set_dropout_rng(self, rng: Rng | None) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    # -- passes ---------------------------------------------------------------

    def _internal_input(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeError(f"expected (N, C, H, W) input, got shape {x.shape}")
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(
                f"expected per-sample shape {self.input_shape}, got {x.shape[1:]}")
        return np.ascontiguousarray(np.transpose(x, (1, 0, 2, 3)),
                                    dtype=self.dtype)

    def forward(self, x: np.ndarray, train: bool = False,
                upto: int | None = None) -> np.ndarray:
        """Run layers 0..upto (inclusive; all if None) on an NCHW batch.

        Returns a copy in the public layout: (N, C, H, W) for spatial
        outputs, (N, features) after flattening.
        """
        h = self._run(x, train, upto)
        if h.ndim == 4:
            return np.ascontiguousarray(np.transpose(h, (1, 0, 2, 3)))
        return h.copy()

    def _run(self, x: np.ndarray, train: bool, upto: int | None) -> np.ndarray:
        stop = len(self.layers) - 1 if upto is None else int(upto)
        if not 0 <= stop < len(self.layers):
            raise ShapeError(f"layer index {upto} out of range")
        h = self._internal_input(x)
        for layer in self.layers[: stop + 1]:
            h = layer.forward(h, train)
        self._ran_upto = stop
        return h

    def forward_logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Forward pass stopping before a trailing softmax (for the loss)."""
        stop = len(self.layers) - 1
        if self.specs and self.specs[-1].kind == "softmax":
            stop -= 1
        return self._run(x, train, stop)

    def backward(self, dout: np.ndarray) -> None:
        """Backpropagate from the last layer run by the previous forward.

        Gradients land in each layer's grad arrays (overwritten, not
        accumulated).  ``dout`` may be modified in place.
        """
        for layer in reversed(self.layers[: self._ran_upto + 1]):
            dout = layer.backward(dout)

    def release_buffers(self) -> None:
        for layer in self.layers:
            layer.release_buffers()


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def desk_network(embedding_size: int = 500, n_classes: int = 8
                 ) -> tuple[list[LayerSpec], int]:
    """Six-conv architecture used throughout: three conv-conv-pool blocks
    (8, 16, 32 channels; pools 2x2, 2x2, 2x1), then dense(embedding_size)
    + relu (the embedding layer), dropout(0.5), dense(n_classes), softmax.

    Returns (specs, embedding_layer_index) where the index names the relu
    after the first dense layer.
    """
    specs = [
        conv_spec(8), relu_spec(),
        conv_spec(8), relu_spec(),
        pool_spec(2, 2),
        conv_spec(16), relu_spec(),
        conv_spec(16), relu_spec(),
        pool_spec(2, 2),
        conv_spec(32), relu_spec(),
        conv_spec(32), relu_spec(),
        pool_spec(2, 1),
        dense_spec(embedding_size), relu_spec(),
        dropout_spec(0.5),
        dense_spec(n_classes), softmax_spec(),
    ]
    return specs, 16


def deep_network(n_classes: int = 8) -> tuple[list[LayerSpec], int]:
    """Nineteen-weight-layer variant: sixteen 3x3 convs in five blocks
    (8,8 / 16,16 / 32x4 / 64x4 / 64x4) with pools (2x2, 2x2, 1x2, none,
    2x2), then dense(500), dense(128) and the classifier head.  The
    embedding is the relu after the 128-unit dense layer.

    Returns (specs, embedding_layer_index).
    """
    specs: list[LayerSpec] = []
    blocks = [
        ((8, 8), (2, 2)),
        ((16, 16), (2, 2)),
        ((32, 32, 32, 32), (1, 2)),
        ((64, 64, 64, 64), None),
        ((64, 64, 64, 64), (2, 2)),
    ]
    for channels, pool in blocks:
        for ch in channels:
            specs.append(conv_spec(ch))
            specs.append(relu_spec())
        if pool is not None:
            specs.append(pool_spec(*pool))
    specs += [
        dense_spec(500), relu_spec(),
        dense_spec(128), relu_spec(),
    ]
    embedding_layer_index = len(specs) - 1
    specs += [
        dropout_spec(0.5),
        dense_spec(n_classes), softmax_spec(),
    ]
    return specs, embedding_layer_index


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


def gradient_check(net: Network, x: np.ndarray, targets: np.ndarray,
                   n_samples: int = 100, eps: float = 1e-5,
                   rng: Rng | None = None) -> dict:
    """Compare analytic parameter gradients against central differences.

    Runs the network in float64 with dropout inactive, computes analytic
    gradients of the mean-squared softmax loss once, then perturbs
    ``n_samples`` randomly chosen parameter entries by +-eps.  The
    relative error for each entry is |num - ana| / max(|num|, |ana|,
    1e-6).  Returns a dict with ``max_rel_err``, ``mean_rel_err``,
    ``n_samples`` and the list of per-sample records.
    """
    rng = rng if rng is not None else Rng(0)
    net.astype(np.float64)
    x = x.astype(np.float64)
    targets = targets.astype(np.float64)

    logits = net.forward_logits(x, train=False)
    _, dlogits = euclid_softmax_loss(logits, targets)
    net.backward(dlogits.copy())
    analytic = {name: g.copy() for name, g in net.grad_items()}

    params = net.param_items()
    sizes = np.array([p.size for _, p in params], dtype=np.int64)
    total = int(sizes.sum())
    cum = np.cumsum(sizes)
    n_samples = min(n_samples, total)
    flat_choice = rng.choice(total, n_samples)

    records = []
    for flat in flat_choice:
        pi = int(np.searchsorted(cum, flat, side="right"))
        offset = int(flat - (cum[pi - 1] if pi else 0))
        name, arr = params[pi]
        view = arr.reshape(-1)
        orig = view[offset]

        view[offset] = orig + eps
        lp, _ = euclid_softmax_loss(net.forward_logits(x, train=False), targets)
        view[offset] = orig - eps
        lm, _ = euclid_softmax_loss(net.forward_logits(x, train=False), targets)
        view[offset] = orig

        num = (lp - lm) / (2.0 * eps)
        ana = float(analytic[name].reshape(-1)[offset])
        rel = abs(num - ana) / max(abs(num), abs(ana), 1e-6)
        records.append({"param": name, "index": offset,
                        "numeric": num, "analytic": ana, "rel_err": rel})

    rels = np.array([r["rel_err"] for r in records])
    return {
        "max_rel_err": float(rels.max()) if records else 0.0,
        "mean_rel_err": float(rels.mean()) if records else 0.0,
        "n_samples": len(records),
        "records": records,
    }
