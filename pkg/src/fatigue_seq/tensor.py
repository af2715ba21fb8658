"""Dense feature-map kernels with forward/backward passes and layer accounting.

Feature maps are float64 arrays laid out ``(height, width, channels)``.
Convolution weights follow the same channel-last convention:

* standard   ``(k, k, in_channels, out_channels)``
* depthwise  ``(k, k, channels)``
* pointwise  ``(1, 1, in_channels, out_channels)``

All convolutions are cross-correlations without bias. ``"same"`` padding
zero-pads ``(k - 1) // 2`` on each side, which preserves the spatial size at
stride 1; ``"valid"`` does not pad.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import InputError, StateError

LEAKY_SLOPE = 0.1


def as_feature_map(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 3 or min(a.shape) < 1:
        raise InputError(f"feature map must be (height, width, channels) with positive sizes, got {a.shape}")
    return a


@dataclass(frozen=True)
class ConvSpec:
    kernel_size: int
    in_channels: int
    out_channels: int
    stride: int = 1
    padding: str = "same"
    kind: str = "standard"

    def __post_init__(self):
        if self.kind not in ("standard", "depthwise", "pointwise"):
            raise InputError(f"unknown convolution kind {self.kind!r}")
        if self.padding not in ("same", "valid"):
            raise InputError(f"unknown padding {self.padding!r}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InputError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if min(self.in_channels, self.out_channels, self.stride) < 1:
            raise InputError("channel counts and stride must be positive")
        if self.kind == "pointwise" and self.kernel_size != 1:
            raise InputError("pointwise convolution requires kernel_size 1")
        if self.kind == "depthwise" and self.out_channels != self.in_channels:
            raise InputError("depthwise convolution requires out_channels == in_channels")

    @property
    def pad(self) -> int:
        return (self.kernel_size - 1) // 2 if self.padding == "same" else 0

    def output_hw(self, height: int, width: int) -> tuple[int, int]:
        p, k, s = self.pad, self.kernel_size, self.stride
        ho = (height + 2 * p - k) // s + 1
        wo = (width + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise InputError(f"input {height}x{width} is smaller than kernel {k}x{k} under {self.padding} padding")
        return ho, wo

    def weight_shape(self) -> tuple[int, ...]:
        k, m, n = self.kernel_size, self.in_channels, self.out_channels
        if self.kind == "depthwise":
            return (k, k, m)
        return (k, k, m, n)


@dataclass(frozen=True)
class DenseSpec:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class GapSpec:
    pass


class LayerAccounting(NamedTuple):
    param_count: int
    flop_count: int


def _check_conv(x, spec: ConvSpec, weights, kind: str):
    if spec.kind != kind:
        raise InputError(f"expected a {kind} ConvSpec, got {spec.kind}")
    x = as_feature_map(x)
    w = np.asarray(weights, dtype=np.float64)
    if x.shape[2] != spec.in_channels:
        raise InputError(f"input has {x.shape[2]} channels, spec expects in_channels={spec.in_channels}")
    if w.shape != spec.weight_shape():
        raise InputError(f"weights shaped {w.shape}, expected {spec.weight_shape()}")
    spec.output_hw(x.shape[0], x.shape[1])
    return x, w


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((p, p), (p, p), (0, 0)))


def conv_standard(x, spec: ConvSpec, weights) -> np.ndarray:
    x, w = _check_conv(x, spec, weights, "standard")
    return kernels.conv2d(_pad(x, spec.pad), w, spec.stride)


def conv_depthwise(x, spec: ConvSpec, weights) -> np.ndarray:
    x, w = _check_conv(x, spec, weights, "depthwise")
    return kernels.depthwise2d(_pad(x, spec.pad), w, spec.stride)


def conv_pointwise(x, spec: ConvSpec, weights) -> np.ndarray:
    x, w = _check_conv(x, spec, weights, "pointwise")
    s = spec.stride
    return x[::s, ::s] @ w[0, 0]


def convolve(x, spec: ConvSpec, weights) -> np.ndarray:
    """Dispatch on ``spec.kind``."""
    return {"standard": conv_standard, "depthwise": conv_depthwise,
            "pointwise": conv_pointwise}[spec.kind](x, spec, weights)


def global_average_pool(x) -> np.ndarray:
    x = as_feature_map(x)
    # shifted mean: exact on constant channels, where a plain sum/n rounds
    ref = x[0, 0]
    return ref + (x - ref).mean(axis=(0, 1))


def fully_connected(x, W, b) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or W.ndim != 2 or b.ndim != 1:
        raise InputError("fully_connected expects a vector, a matrix and a bias vector")
    if W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0]:
        raise InputError(f"W is {W.shape}, input has {x.shape[0]} features, bias has {b.shape[0]}")
    return W @ x + b


def leaky_relu(x, alpha: float = LEAKY_SLOPE):
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0.0, x, alpha * x)
    return out if out.ndim else float(out)


def residual_add(a, b) -> np.ndarray:
    a = as_feature_map(a)
    b = as_feature_map(b)
    if a.shape != b.shape:
        raise InputError(f"shortcut shapes differ: {a.shape} vs {b.shape}")
    return a + b


@dataclass
class UnitParams:
    """Weights of one depthwise-separable residual unit."""

    depthwise: np.ndarray
    pointwise: np.ndarray
    alpha: float = LEAKY_SLOPE

    @property
    def channels(self) -> int:
        return self.depthwise.shape[2]

    def specs(self) -> tuple[ConvSpec, ConvSpec]:
        k = self.depthwise.shape[0]
        m = self.channels
        n = self.pointwise.shape[3]
        return (ConvSpec(k, m, m, 1, "same", "depthwise"),
                ConvSpec(1, m, n, 1, "same", "pointwise"))


def feature_unit_forward(x, params: UnitParams) -> np.ndarray:
    """DWC -> LeakyReLU -> PWC -> LeakyReLU, added back onto the input."""
    dw_spec, pw_spec = params.specs()
    if pw_spec.out_channels != pw_spec.in_channels:
        raise InputError("the shortcut needs pointwise out_channels == in_channels")
    h = leaky_relu(conv_depthwise(x, dw_spec, params.depthwise), params.alpha)
    h = leaky_relu(conv_pointwise(h, pw_spec, params.pointwise), params.alpha)
    return residual_add(x, h)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# --------------------------------------------------------------------------
# Layers with recorded forward passes


class Layer:
    """Base for ops that cache their forward inputs for ``backward``."""

    def __init__(self):
        self._cache = None

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return self._cache


class Conv(Layer):
    def __init__(self, spec: ConvSpec, weights):
        super().__init__()
        self.spec = spec
        self.weights = np.asarray(weights, dtype=np.float64)

    @classmethod
    def init(cls, spec: ConvSpec, rng: np.random.Generator):
        k = spec.kernel_size
        if spec.kind == "depthwise":
            fan_in, fan_out = k * k, k * k
        else:
            fan_in, fan_out = k * k * spec.in_channels, k * k * spec.out_channels
        return cls(spec, glorot_uniform(spec.weight_shape(), fan_in, fan_out, rng))

    def params(self):
        return {"weights": self.weights}

    def forward(self, x):
        x = as_feature_map(x)
        self._cache = x
        return convolve(x, self.spec, self.weights)

    def backward(self, dy):
        x = self._cached()
        spec, w = self.spec, self.weights
        k, s, p = spec.kernel_size, spec.stride, spec.pad
        xp = _pad(x, p)
        ho, wo = dy.shape[:2]
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(w)
        for di in range(k):
            for dj in range(k):
                rows = slice(di, di + s * (ho - 1) + 1, s)
                cols = slice(dj, dj + s * (wo - 1) + 1, s)
                patch = xp[rows, cols, :]
                if spec.kind == "depthwise":
                    dw[di, dj] = (patch * dy).sum(axis=(0, 1))
                    dxp[rows, cols, :] += dy * w[di, dj]
                else:
                    dw[di, dj] = np.einsum("yxm,yxn->mn", patch, dy)
                    dxp[rows, cols, :] += dy @ w[di, dj].T
        dx = dxp[p:p + x.shape[0], p:p + x.shape[1]] if p else dxp
        return dx, {"weights": dw}


class GlobalAvgPool(Layer):
    def forward(self, x):
        x = as_feature_map(x)
        self._cache = x.shape
        return global_average_pool(x)

    def backward(self, dy):
        h, w, c = self._cached()
        return np.broadcast_to(np.asarray(dy) / (h * w), (h, w, c)).copy(), {}


class Dense(Layer):
    def __init__(self, W, b):
        super().__init__()
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)

    @classmethod
    def init(cls, in_features: int, out_features: int, rng: np.random.Generator):
        W = glorot_uniform((out_features, in_features), in_features, out_features, rng)
        return cls(W, np.zeros(out_features))

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x):
        out = fully_connected(x, self.W, self.b)
        self._cache = np.asarray(x, dtype=np.float64)
        return out

    def backward(self, dy):
        x = self._cached()
        dy = np.asarray(dy, dtype=np.float64)
        return self.W.T @ dy, {"W": np.outer(dy, x), "b": dy.copy()}


class LeakyReLU(Layer):
    def __init__(self, alpha: float = LEAKY_SLOPE):
        super().__init__()
        self.alpha = alpha

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._cache = x
        return leaky_relu(x, self.alpha)

    def backward(self, dy):
        x = self._cached()
        return np.where(x >= 0.0, 1.0, self.alpha) * dy, {}


class Residual(Layer):
    """Two-input shortcut sum; the input gradient is a pair."""

    def forward(self, a, b):
        out = residual_add(a, b)
        self._cache = True
        return out

    def backward(self, dy):
        self._cached()
        dy = np.asarray(dy, dtype=np.float64)
        return (dy, dy.copy()), {}


class FeatureUnit(Layer):
    def __init__(self, params: UnitParams):
        super().__init__()
        self.unit = params
        dw_spec, pw_spec = params.specs()
        self.dw = Conv(dw_spec, params.depthwise)
        self.act1 = LeakyReLU(params.alpha)
        self.pw = Conv(pw_spec, params.pointwise)
        self.act2 = LeakyReLU(params.alpha)
        self.add = Residual()

    @classmethod
    def init(cls, channels: int, kernel_size: int, rng: np.random.Generator, alpha: float = LEAKY_SLOPE):
        dw = Conv.init(ConvSpec(kernel_size, channels, channels, kind="depthwise"), rng).weights
        pw = Conv.init(ConvSpec(1, channels, channels, kind="pointwise"), rng).weights
        return cls(UnitParams(dw, pw, alpha))

    def params(self):
        return {"depthwise": self.unit.depthwise, "pointwise": self.unit.pointwise}

    def forward(self, x):
        x = as_feature_map(x)
        h = self.act2.forward(self.pw.forward(self.act1.forward(self.dw.forward(x))))
        self._cache = True
        return self.add.forward(x, h)

    def backward(self, dy):
        self._cached()
        (d_short, d_branch), _ = self.add.backward(dy)
        d, _ = self.act2.backward(d_branch)
        d, g_pw = self.pw.backward(d)
        d, _ = self.act1.backward(d)
        d, g_dw = self.dw.backward(d)
        return d_short + d, {"depthwise": g_dw["weights"], "pointwise": g_pw["weights"]}


def backward(op: Layer, upstream):
    """Return ``(input_gradient, parameter_gradients)`` for a forwarded op."""
    return op.backward(upstream)


# --------------------------------------------------------------------------
# Accounting


def count_params_flops(spec, input_shape=None) -> LayerAccounting:
    """Exact parameter and FLOP counts; one multiply-accumulate is 2 FLOPs.

    ``input_shape`` is ``(height, width, channels)`` for convolution and
    pooling specs and is ignored for dense specs. Dense biases cost one FLOP
    per output; pooling costs ``height * width`` adds plus one divide per
    channel.
    """
    if isinstance(spec, DenseSpec):
        n_in, n_out = spec.in_features, spec.out_features
        return LayerAccounting(n_in * n_out + n_out, 2 * n_in * n_out + n_out)
    if isinstance(spec, GapSpec):
        h, w, c = input_shape
        return LayerAccounting(0, c * (h * w + 1))
    if isinstance(spec, ConvSpec):
        k, m, n = spec.kernel_size, spec.in_channels, spec.out_channels
        params = {"standard": k * k * m * n, "depthwise": k * k * m, "pointwise": m * n}[spec.kind]
        if input_shape is None:
            return LayerAccounting(params, 0)
        ho, wo = spec.output_hw(input_shape[0], input_shape[1])
        return LayerAccounting(params, 2 * ho * wo * params)
    raise InputError(f"cannot account for {type(spec).__name__}")


def separable_accounting(kernel_size: int, in_channels: int, out_channels: int,
                         input_shape=None) -> LayerAccounting:
    """Depthwise followed by pointwise, summed."""
    dw = count_params_flops(ConvSpec(kernel_size, in_channels, in_channels, kind="depthwise"), input_shape)
    hw_after = None
    if input_shape is not None:
        hw_after = (*ConvSpec(kernel_size, in_channels, in_channels, kind="depthwise").output_hw(*input_shape[:2]),
                    in_channels)
    pw = count_params_flops(ConvSpec(1, in_channels, out_channels, kind="pointwise"), hw_after)
    return LayerAccounting(dw.param_count + pw.param_count, dw.flop_count + pw.flop_count)
