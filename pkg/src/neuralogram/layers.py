"""Neural-network layers with explicit forward/backward passes.

Public array convention
-----------------------
All public entry points (the functional ops at the bottom of this module
and :class:`~neuralogram.network.Network`) use NCHW batches:
``(batch, channels, height, width)`` for spatial tensors and
``(batch, features)`` after flattening.  Convolution kernels are
``(out_channels, in_channels, kernel_h, kernel_w)``.

Internal layout
---------------
Internally the spatial layers keep activations channel-major,
``(channels, batch, height, width)``, which makes the im2col gather and
the GEMM operands contiguous in the orientations BLAS likes.  Layers own
persistent scratch buffers (re-used across steps, re-allocated only when
the shape or dtype changes) so the steady-state training loop performs
no large allocations.

Ownership contract: a layer's ``forward`` may return one of its own
buffers and may modify its *input* in place when that input is another
layer's output buffer (ReLU and Dropout do).  ``backward`` consumes the
upstream gradient, may modify it in place, and returns a buffer owned by
the layer.  Callers that need a tensor to survive the next pass must
copy it; ``Network`` does this at its public boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _kernels
from .errors import ShapeError
from .rng import Rng


# ---------------------------------------------------------------------------
# Layer specifications (serializable architecture description)
# ---------------------------------------------------------------------------

_LAYER_KINDS = ("conv2d", "relu", "maxpool2d", "dense", "dropout", "softmax")


@dataclass(frozen=True)
class LayerSpec:
    """Serializable description of one layer.

    ``kind`` is one of ``conv2d | relu | maxpool2d | dense | dropout |
    softmax``; ``params`` holds the kind-specific integers/floats (all
    JSON-representable).
    """

    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in _LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params)}

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "LayerSpec":
        return LayerSpec(kind=str(d["kind"]), params=dict(d.get("params", {})))


def conv_spec(out_channels: int, kernel_h: int = 3, kernel_w: int = 3,
              stride: int = 1) -> LayerSpec:
    return LayerSpec("conv2d", {"out_channels": int(out_channels),
                                "kernel_h": int(kernel_h),
                                "kernel_w": int(kernel_w),
                                "stride": int(stride)})


def pool_spec(pool_h: int, pool_w: int) -> LayerSpec:
    return LayerSpec("maxpool2d", {"pool_h": int(pool_h), "pool_w": int(pool_w)})


def dense_spec(units: int) -> LayerSpec:
    return LayerSpec("dense", {"units": int(units)})


def dropout_spec(rate: float) -> LayerSpec:
    return LayerSpec("dropout", {"rate": float(rate)})


def relu_spec() -> LayerSpec:
    return LayerSpec("relu")


def softmax_spec() -> LayerSpec:
    return LayerSpec("softmax")


# ---------------------------------------------------------------------------
# Buffer cache helper
# ---------------------------------------------------------------------------


def _buf(cache: dict, key: str, shape: tuple, dtype) -> np.ndarray:
    arr = cache.get(key)
    if arr is None or arr.shape != shape or arr.dtype != dtype:
        arr = np.empty(shape, dtype=dtype)
        cache[key] = arr
    return arr


# ---------------------------------------------------------------------------
# Layer base
# ---------------------------------------------------------------------------


class Layer:
    """Base class; subclasses implement forward/backward in the internal
    channel-major layout."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self._bufs: dict[str, np.ndarray] = {}

    # Parameter layers override these.
    def param_names(self) -> tuple[str, ...]:
        return ()

    def get_param(self, name: str) -> np.ndarray:
        raise KeyError(name)

    def set_param(self, name: str, value: np.ndarray) -> None:
        raise KeyError(name)

    def get_grad(self, name: str) -> np.ndarray:
        raise KeyError(name)

    def init_params(self, rng: Rng, dtype) -> None:
        pass

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def release_buffers(self) -> None:
        self._bufs.clear()


def xavier_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int,
                   rng: Rng, dtype=np.float32) -> np.ndarray:
    """Uniform init on [-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    n = int(np.prod(shape))
    u = rng.uniform(n) * (2.0 * a) - a
    return u.reshape(shape).astype(dtype)


# ---------------------------------------------------------------------------
# Conv2D
# ---------------------------------------------------------------------------


class Conv2D(Layer):
    """Valid (no padding) 2-D convolution via im2col + GEMM.

    Parameters: ``kernel`` (F, C, kh, kw) and ``bias`` (F,).  The im2col
    gather loops only over the kh*kw kernel offsets; each copy is a bulk
    strided-to-contiguous move, and both GEMMs are arranged so their
    outputs are produced directly in C order (no transpose copies of the
    large operands).
    """

    def __init__(self, spec: LayerSpec, in_channels: int):
        super().__init__(spec)
        p = spec.params
        self.in_channels = int(in_channels)
        self.out_channels = int(p["out_channels"])
        self.kh = int(p["kernel_h"])
        self.kw = int(p["kernel_w"])
        self.stride = int(p.get("stride", 1))
        if self.kh < 1 or self.kw < 1 or self.stride < 1:
            raise ShapeError("conv2d kernel/stride must be positive")
        self.kernel = np.zeros(
            (self.out_channels, self.in_channels, self.kh, self.kw), np.float32)
        self.bias = np.zeros(self.out_channels, np.float32)
        self.g_kernel = np.zeros_like(self.kernel)
        self.g_bias = np.zeros_like(self.bias)

    def param_names(self):
        return ("kernel", "bias")

    def get_param(self, name):
        return {"kernel": self.kernel, "bias": self.bias}[name]

    def set_param(self, name, value):
        cur = self.get_param(name)
        if value.shape != cur.shape:
            raise ShapeError(
                f"conv2d param {name}: expected shape {cur.shape}, got {value.shape}")
        if name == "kernel":
            self.kernel = np.ascontiguousarray(value)
            self.g_kernel = np.zeros_like(self.kernel)
        else:
            self.bias = np.ascontiguousarray(value)
            self.g_bias = np.zeros_like(self.bias)

    def get_grad(self, name):
        return {"kernel": self.g_kernel, "bias": self.g_bias}[name]

    def init_params(self, rng, dtype):
        fan_in = self.in_channels * self.kh * self.kw
        fan_out = self.out_channels * self.kh * self.kw
        self.kernel = xavier_uniform(self.kernel.shape, fan_in, fan_out, rng, dtype)
        self.bias = np.zeros(self.out_channels, dtype)
        self.g_kernel = np.zeros_like(self.kernel)
        self.g_bias = np.zeros_like(self.bias)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeError(
                f"conv2d expects {self.in_channels} channels, got {c}")
        ho = (h - self.kh) // self.stride + 1
        wo = (w - self.kw) // self.stride + 1
        if h < self.kh or w < self.kw:
            raise ShapeError(
                f"conv2d input {h}x{w} smaller than kernel {self.kh}x{self.kw}")
        return (self.out_channels, ho, wo)

    def _im2col(self, x: np.ndarray, ho: int, wo: int) -> np.ndarray:
        c, n, _, _ = x.shape
        s = self.stride
        cols = _buf(self._bufs, "cols",
                    (self.kh * self.kw * c, n * ho * wo), x.dtype)
        v = cols.reshape(self.kh, self.kw, c, n, ho, wo)
        for a in range(self.kh):
            for b in range(self.kw):
                np.copyto(v[a, b],
                          x[:, :, a: a + ho * s: s, b: b + wo * s: s])
        return cols

    def forward(self, x, train):
        c, n, h, w = x.shape
        _, ho, wo = self.out_shape((c, h, w))
        cols = self._im2col(x, ho, wo)
        # rows ordered (a, b, c) to match the im2col gather
        kmat = self.kernel.transpose(2, 3, 1, 0).reshape(-1, self.out_channels)
        kmat = np.ascontiguousarray(kmat)
        out2 = _buf(self._bufs, "out", (self.out_channels, n * ho * wo), x.dtype)
        np.matmul(kmat.T, cols, out=out2)
        out2 += self.bias.astype(x.dtype, copy=False)[:, None]
        self._kmat = kmat
        self._in_shape = x.shape
        self._out_hw = (ho, wo)
        return out2.reshape(self.out_channels, n, ho, wo)

    def backward(self, dout):
        c, n, h, w = self._in_shape
        ho, wo = self._out_hw
        d2 = dout.reshape(self.out_channels, -1)
        cols = self._bufs["cols"]

        dk_abc = _buf(self._bufs, "dk", (self.kh * self.kw * c, self.out_channels),
                      dout.dtype)
        np.matmul(cols, d2.T, out=dk_abc)
        self.g_kernel[:] = dk_abc.reshape(
            self.kh, self.kw, c, self.out_channels).transpose(3, 2, 0, 1)
        self.g_bias[:] = d2.sum(axis=1)

        dcols = _buf(self._bufs, "dcols",
                     (self.kh * self.kw * c, n * ho * wo), dout.dtype)
        np.matmul(self._kmat, d2, out=dcols)
        dv = dcols.reshape(self.kh, self.kw, c, n, ho, wo)
        dx = _buf(self._bufs, "dx", (c, n, h, w), dout.dtype)
        if self.stride == 1 and _kernels.HAVE_NUMBA:
            _kernels.col2im_stride1(dv, dx)
        else:
            _kernels.col2im_numpy(dv, dx, self.stride)
        return dx


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------


class ReLU(Layer):
    """max(x, 0).  Rectifies its input buffer in place and keeps a boolean
    mask for the backward pass (which also runs in place)."""

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train):
        mask = _buf(self._bufs, "mask", x.shape, np.bool_)
        np.greater(x, 0, out=mask)
        np.maximum(x, 0, out=x)
        self._mask = mask
        return x

    def backward(self, dout):
        np.multiply(dout, self._mask, out=dout)
        return dout


# ---------------------------------------------------------------------------
# MaxPool2D
# ---------------------------------------------------------------------------


class MaxPool2D(Layer):
    """Non-overlapping max pooling with -inf padding up to a multiple of
    the pool size (so partial edge cells still pool correctly)."""

    def __init__(self, spec: LayerSpec):
        super().__init__(spec)
        self.ph = int(spec.params["pool_h"])
        self.pw = int(spec.params["pool_w"])
        if self.ph < 1 or self.pw < 1:
            raise ShapeError("maxpool2d pool size must be positive")

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, -(-h // self.ph), -(-w // self.pw))

    def forward(self, x, train):
        c, n, h, w = x.shape
        ph, pw = self.ph, self.pw
        ho, wo = -(-h // ph), -(-w // pw)
        hp, wp = ho * ph, wo * pw

        if (hp, wp) != (h, w):
            xp = _buf(self._bufs, "xp", (c, n, hp, wp), x.dtype)
            xp.fill(-np.inf)
            xp[:, :, :h, :w] = x
        else:
            xp = x
        # group the (ph, pw) window of each output cell into the last axis
        v = _buf(self._bufs, "v", (c, n, ho, wo, ph, pw), x.dtype)
        np.copyto(v, xp.reshape(c, n, ho, ph, wo, pw).transpose(0, 1, 2, 4, 3, 5))
        v2 = v.reshape(c, n, ho, wo, ph * pw)
        idx = _buf(self._bufs, "idx", (c, n, ho, wo), np.int64)
        np.argmax(v2, axis=-1, out=idx)
        out = _buf(self._bufs, "out", (c, n, ho, wo), x.dtype)
        np.copyto(out, np.take_along_axis(v2, idx[..., None], axis=-1)[..., 0])
        self._in_hw = (h, w)
        self._padded_hw = (hp, wp)
        return out

    def backward(self, dout):
        c, n, ho, wo = dout.shape
        ph, pw = self.ph, self.pw
        h, w = self._in_hw
        hp, wp = self._padded_hw
        g = _buf(self._bufs, "g", (c, n, ho, wo, ph * pw), dout.dtype)
        g.fill(0)
        np.put_along_axis(g, self._bufs["idx"][..., None], dout[..., None], axis=-1)
        dxp = _buf(self._bufs, "dxp", (c, n, hp, wp), dout.dtype)
        np.copyto(dxp.reshape(c, n, ho, ph, wo, pw),
                  g.reshape(c, n, ho, wo, ph, pw).transpose(0, 1, 2, 4, 3, 5))
        return dxp[:, :, :h, :w]


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------


class Dense(Layer):
    """Fully connected layer.  A 4-D channel-major input is flattened to
    (batch, channels*height*width) with per-sample (c, h, w) ordering."""

    def __init__(self, spec: LayerSpec, in_features: int):
        super().__init__(spec)
        self.in_features = int(in_features)
        self.units = int(spec.params["units"])
        if self.units < 1:
            raise ShapeError("dense units must be positive")
        self.weight = np.zeros((self.in_features, self.units), np.float32)
        self.bias = np.zeros(self.units, np.float32)
        self.g_weight = np.zeros_like(self.weight)
        self.g_bias = np.zeros_like(self.bias)

    def param_names(self):
        return ("weight", "bias")

    def get_param(self, name):
        return {"weight": self.weight, "bias": self.bias}[name]

    def set_param(self, name, value):
        cur = self.get_param(name)
        if value.shape != cur.shape:
            raise ShapeError(
                f"dense param {name}: expected shape {cur.shape}, got {value.shape}")
        if name == "weight":
            self.weight = np.ascontiguousarray(value)
            self.g_weight = np.zeros_like(self.weight)
        else:
            self.bias = np.ascontiguousarray(value)
            self.g_bias = np.zeros_like(self.bias)

    def get_grad(self, name):
        return {"weight": self.g_weight, "bias": self.g_bias}[name]

    def init_params(self, rng, dtype):
        self.weight = xavier_uniform((self.in_features, self.units),
                                     self.in_features, self.units, rng, dtype)
        self.bias = np.zeros(self.units, dtype)
        self.g_weight = np.zeros_like(self.weight)
        self.g_bias = np.zeros_like(self.bias)

    def out_shape(self, in_shape):
        d = int(np.prod(in_shape))
        if d != self.in_features:
            raise ShapeError(
                f"dense expects {self.in_features} features, got {d} "
                f"(input shape {in_shape})")
        return (self.units,)

    def forward(self, x, train):
        if x.ndim == 4:
            c, n, h, w = x.shape
            xf = _buf(self._bufs, "xf", (n, c * h * w), x.dtype)
            np.copyto(xf.reshape(n, c, h, w), x.transpose(1, 0, 2, 3))
            self._in4 = (c, n, h, w)
        else:
            xf = x
            self._in4 = None
        self._xf = xf
        y = _buf(self._bufs, "y", (xf.shape[0], self.units), x.dtype)
        np.matmul(xf, self.weight.astype(x.dtype, copy=False), out=y)
        y += self.bias.astype(x.dtype, copy=False)
        return y

    def backward(self, dout):
        xf = self._xf
        w = self.weight.astype(dout.dtype, copy=False)
        if self.g_weight.dtype == dout.dtype:
            np.matmul(xf.T, dout, out=self.g_weight)
            np.sum(dout, axis=0, out=self.g_bias)
        else:
            self.g_weight[:] = xf.T @ dout
            self.g_bias[:] = dout.sum(axis=0)
        dxf = _buf(self._bufs, "dxf", xf.shape, dout.dtype)
        np.matmul(dout, w.T, out=dxf)
        if self._in4 is None:
            return dxf
        c, n, h, w4 = self._in4
        dx4 = _buf(self._bufs, "dx4", (c, n, h, w4), dout.dtype)
        np.copyto(dx4, dxf.reshape(n, c, h, w4).transpose(1, 0, 2, 3))
        return dx4


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------


class Dropout(Layer):
    """Inverted dropout: in training, zero each unit with probability
    ``rate`` and scale survivors by 1/(1-rate); identity in eval mode.

    The mask stream comes from ``self.rng`` (set by the trainer); with no
    rng attached the layer runs as identity even in train mode.
    """

    def __init__(self, spec: LayerSpec):
        super().__init__(spec)
        self.rate = float(spec.params["rate"])
        if not 0.0 <= self.rate < 1.0:
            raise ShapeError("dropout rate must be in [0, 1)")
        self.rng: Rng | None = None
        self._scaled_mask: np.ndarray | None = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train):
        if not train or self.rate == 0.0 or self.rng is None:
            self._scaled_mask = None
            return x
        u = self.rng.uniform(x.size).reshape(x.shape)
        mask = _buf(self._bufs, "mask", x.shape, x.dtype)
        keep = u >= self.rate
        np.multiply(keep, 1.0 / (1.0 - self.rate), out=mask, casting="unsafe")
        np.multiply(x, mask, out=x)
        self._scaled_mask = mask
        return x

    def backward(self, dout):
        if self._scaled_mask is not None:
            np.multiply(dout, self._scaled_mask, out=dout)
        return dout


# ---------------------------------------------------------------------------
# Softmax
# ---------------------------------------------------------------------------


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable row-wise softmax."""
    zs = z - z.max(axis=axis, keepdims=True)
    e = np.exp(zs)
    return e / e.sum(axis=axis, keepdims=True)


class Softmax(Layer):
    """Row-wise softmax over the feature axis of a (batch, features) input."""

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train):
        p = softmax(x, axis=-1)
        self._p = p
        return p

    def backward(self, dout):
        p = self._p
        inner = np.sum(dout * p, axis=-1, keepdims=True)
        return p * (dout - inner)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def euclid_softmax_loss(logits: np.ndarray,
                        targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared Euclidean distance between softmax(logits) and targets.

    L = (1/N) sum_n ||softmax(z_n) - t_n||^2.  Returns (loss, dL/dlogits).
    """
    if logits.shape != targets.shape:
        raise ShapeError(
            f"logits shape {logits.shape} != targets shape {targets.shape}")
    n = logits.shape[0]
    p = softmax(logits, axis=-1)
    diff = p - targets
    loss = float(np.sum(diff * diff) / n)
    g = (2.0 / n) * diff                        # dL/dp
    inner = np.sum(g * p, axis=-1, keepdims=True)
    dlogits = p * (g - inner)                   # softmax Jacobian applied to g
    return loss, dlogits.astype(logits.dtype, copy=False)


# ---------------------------------------------------------------------------
# Functional ops (public NCHW convention, pure functions)
# ---------------------------------------------------------------------------


def _to_internal(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(x, (1, 0, 2, 3)))


def _to_public(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(x, (1, 0, 2, 3)))


def _conv_layer_for(kernel: np.ndarray, bias: np.ndarray, stride: int) -> Conv2D:
    f, c, kh, kw = kernel.shape
    layer = Conv2D(conv_spec(f, kh, kw, stride), in_channels=c)
    layer.set_param("kernel", kernel)
    layer.set_param("bias", bias)
    return layer


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
           stride: int = 1) -> np.ndarray:
    """Valid 2-D convolution of an NCHW batch.  Returns (N, F, Ho, Wo)."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernel")
    layer = _conv_layer_for(kernel, bias, stride)
    y = layer.forward(_to_internal(x), train=False)
    return _to_public(y)


def conv2d_backward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                    dout: np.ndarray, stride: int = 1
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d: returns (dx, dkernel, dbias) for upstream dout."""
    layer = _conv_layer_for(kernel.astype(x.dtype, copy=False),
                            bias.astype(x.dtype, copy=False), stride)
    layer.forward(_to_internal(x), train=False)
    dx = layer.backward(_to_internal(dout))
    return _to_public(dx), layer.g_kernel.copy(), layer.g_bias.copy()


def maxpool2d(x: np.ndarray, pool_h: int, pool_w: int) -> np.ndarray:
    """Non-overlapping max pool of an NCHW batch (edges padded with -inf)."""
    layer = MaxPool2D(pool_spec(pool_h, pool_w))
    return _to_public(layer.forward(_to_internal(x), train=False))


def maxpool2d_backward(x: np.ndarray, pool_h: int, pool_w: int,
                       dout: np.ndarray) -> np.ndarray:
    layer = MaxPool2D(pool_spec(pool_h, pool_w))
    layer.forward(_to_internal(x), train=False)
    return _to_public(layer.backward(_to_internal(dout)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map y = x @ weight + bias for a (batch, features) input."""
    return x @ weight + bias


def dropout(x: np.ndarray, rate: float, rng: Rng, train: bool = True) -> np.ndarray:
    """Inverted dropout (pure function; consumes one rng draw in train mode)."""
    if not train or rate == 0.0:
        return x.copy()
    u = rng.uniform(x.size).reshape(x.shape)
    return np.where(u >= rate, x / (1.0 - rate), 0.0).astype(x.dtype)
