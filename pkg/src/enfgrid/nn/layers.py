"""Layers with hand-written backward passes.

Arrays are batch-first: images are (batch, height, width, channels), dense
activations are (batch, features). Each layer caches what its backward pass
needs during a training-mode forward call.
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("Conv2D", "MaxPool", "Flatten", "Dense", "Dropout")
ACTIVATIONS = (None, "relu", "sigmoid")


class ShapeError(ValueError):
    """Input shape does not match what a layer was built for."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: Optional[int] = None
    units: Optional[int] = None
    kernel: int = 3
    pool: int = 2
    rate: float = 0.0
    activation: Optional[str] = None
    padding: str = "same"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "Conv2D" and not (self.filters and self.filters > 0):
            raise ValueError("Conv2D needs a positive filter count")
        if self.kind == "Dense" and not (self.units and self.units > 0):
            raise ValueError("Dense needs a positive unit count")
        if self.kind == "Dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {self.padding!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def conv2d(filters, kernel=3, activation="relu", padding="same"):
    return LayerSpec("Conv2D", filters=filters, kernel=kernel, activation=activation, padding=padding)


def maxpool(pool=2):
    return LayerSpec("MaxPool", pool=pool)


def flatten():
    return LayerSpec("Flatten")


def dense(units, activation="relu"):
    return LayerSpec("Dense", units=units, activation=activation)


def dropout(rate):
    return LayerSpec("Dropout", rate=rate)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(dout, out, kind):
    if kind == "relu":
        return dout * (out > 0)
    if kind == "sigmoid":
        return dout * out * (1 - out)
    return dout


class Layer:
    trainable = False

    def __init__(self, spec, input_shape):
        self.spec = spec
        self.input_shape = tuple(int(s) for s in input_shape)
        self.output_shape = self._infer(self.input_shape)
        self.params = {}
        self.grads = {}
        self._cache = None

    def _infer(self, shape):
        return shape

    def init(self, rng, dtype, zero=False):
        pass

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.spec.kind}: backward called without a training-mode forward")
        cache, self._cache = self._cache, None
        return cache


class Conv2D(Layer):
    trainable = True

    def _infer(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"expects (height, width, channels) input, got {shape}")
        h, w, c = shape
        k = self.spec.kernel
        self.pad = (k - 1) // 2 if self.spec.padding == "same" else 0
        ho, wo = h + 2 * self.pad - k + 1, w + 2 * self.pad - k + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"kernel {k} does not fit input {shape}")
        return (ho, wo, self.spec.filters)

    def init(self, rng, dtype, zero=False):
        c = self.input_shape[2]
        k = self.spec.kernel
        fan_in = c * k * k
        # (filters, kernel_h, kernel_w, channels) so patches flatten as (kh, kw, c)
        shape = (self.spec.filters, k, k, c)
        if zero:
            self.params["W"] = np.zeros(shape, dtype)
        else:
            self.params["W"] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.params["b"] = np.zeros(self.spec.filters, dtype)

    def forward(self, x, training=False, rng=None):
        n = x.shape[0]
        k, p = self.spec.kernel, self.pad
        W = self.params["W"]
        ho, wo, f = self.output_shape
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        windows = sliding_window_view(xp, (k, k), axis=(1, 2))
        cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, -1)
        z = cols @ W.reshape(f, -1).T
        z += self.params["b"]
        out = _activate(z, self.spec.activation)
        if training:
            self._cache = (cols, out, x.shape)
        return out.reshape(n, ho, wo, f)

    def backward(self, dout, need_input_grad=True):
        cols, out, xshape = self._take_cache()
        n, h, w, c = xshape
        k, p = self.spec.kernel, self.pad
        W = self.params["W"]
        ho, wo, f = self.output_shape
        dz = _activation_grad(dout.reshape(-1, f), out, self.spec.activation)
        self.grads["W"] = (dz.T @ cols).reshape(W.shape)
        self.grads["b"] = dz.sum(axis=0)
        if not need_input_grad:
            return None
        dcols = (dz @ W.reshape(f, -1)).reshape(n, ho, wo, k, k, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p:p + h, p:p + w, :] if p else dxp


class MaxPool(Layer):

    def _infer(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"expects (height, width, channels) input, got {shape}")
        h, w, c = shape
        s = self.spec.pool
        if h // s < 1 or w // s < 1:
            raise ShapeError(f"pool {s} does not fit input {shape}")
        return (h // s, w // s, c)

    def _blocks(self, x):
        n = x.shape[0]
        s = self.spec.pool
        ho, wo, c = self.output_shape
        blocks = x[:, :ho * s, :wo * s, :].reshape(n, ho, s, wo, s, c)
        return blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, s * s)

    def forward(self, x, training=False, rng=None):
        if self.spec.pool == 2:
            return self._forward2(x, training)
        blocks = self._blocks(x)
        # first maximum wins ties
        arg = blocks.argmax(axis=-1)
        if training:
            self._cache = (arg, x.shape)
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def _forward2(self, x, training):
        ho, wo, _ = self.output_shape
        x = x[:, :2 * ho, :2 * wo, :]
        a, b = x[:, 0::2, 0::2], x[:, 0::2, 1::2]
        c, d = x[:, 1::2, 0::2], x[:, 1::2, 1::2]
        first_ab = a >= b
        first_cd = c >= d
        ab = np.where(first_ab, a, b)
        cd = np.where(first_cd, c, d)
        top = ab >= cd
        if training:
            arg = np.where(top, np.where(first_ab, 0, 1), np.where(first_cd, 2, 3)).astype(np.int8)
            self._cache = (arg, None)
        return np.where(top, ab, cd)

    def backward(self, dout):
        arg, xshape = self._take_cache()
        if xshape is None:
            return self._backward2(dout, arg)
        n = xshape[0]
        s = self.spec.pool
        ho, wo, c = self.output_shape
        dblocks = np.zeros((n, ho, wo, c, s * s), dtype=dout.dtype)
        np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
        dblocks = dblocks.reshape(n, ho, wo, c, s, s).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(xshape, dtype=dout.dtype)
        dx[:, :ho * s, :wo * s, :] = dblocks.reshape(n, ho * s, wo * s, c)
        return dx

    def _backward2(self, dout, arg):
        h, w, _ = self.input_shape
        ho, wo, _ = self.output_shape
        dx = np.zeros((dout.shape[0], h, w, dout.shape[3]), dtype=dout.dtype)
        zero = dout.dtype.type(0)
        dx[:, 0:2 * ho:2, 0:2 * wo:2] = np.where(arg == 0, dout, zero)
        dx[:, 0:2 * ho:2, 1:2 * wo:2] = np.where(arg == 1, dout, zero)
        dx[:, 1:2 * ho:2, 0:2 * wo:2] = np.where(arg == 2, dout, zero)
        dx[:, 1:2 * ho:2, 1:2 * wo:2] = np.where(arg == 3, dout, zero)
        return dx


class Flatten(Layer):

    def _infer(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False, rng=None):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._take_cache())


class Dense(Layer):
    trainable = True

    def _infer(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"expects flat (features,) input, got {shape}")
        return (self.spec.units,)

    def init(self, rng, dtype, zero=False):
        fan_in = self.input_shape[0]
        shape = (fan_in, self.spec.units)
        if zero:
            self.params["W"] = np.zeros(shape, dtype)
        elif self.spec.activation == "relu":
            self.params["W"] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
        else:
            limit = np.sqrt(6.0 / (fan_in + self.spec.units))
            self.params["W"] = rng.uniform(-limit, limit, shape).astype(dtype)
        self.params["b"] = np.zeros(self.spec.units, dtype)

    def forward(self, x, training=False, rng=None):
        out = _activate(x @ self.params["W"] + self.params["b"], self.spec.activation)
        if training:
            self._cache = (x, out)
        return out

    def backward(self, dout):
        x, out = self._take_cache()
        dz = _activation_grad(dout, out, self.spec.activation)
        self.grads["W"] = x.T @ dz
        self.grads["b"] = dz.sum(axis=0)
        return dz @ self.params["W"].T


class Dropout(Layer):

    def forward(self, x, training=False, rng=None):
        rate = self.spec.rate
        if not training or rate == 0.0:
            if training:
                self._cache = None, True
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs a random generator")
        mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
        self._cache = mask, True
        return x * mask

    def backward(self, dout):
        mask, _ = self._take_cache()
        return dout if mask is None else dout * mask


LAYER_TYPES = {"Conv2D": Conv2D, "MaxPool": MaxPool, "Flatten": Flatten,
               "Dense": Dense, "Dropout": Dropout}


def build_layer(spec, input_shape):
    return LAYER_TYPES[spec.kind](spec, input_shape)
