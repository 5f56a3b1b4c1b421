"""Sequential layers with hand-written backward passes.

Conv1D tensors are laid out (batch, channels, length); a 2D input to a
single-channel Conv1D is read as (batch, length). Convolutions are valid
(no padding) with stride 1. Flatten is channel-major.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..rng import Rng
from .params import Parameters


class ShapeError(ValueError):
    pass


class CacheError(RuntimeError):
    pass


class Act(str, enum.Enum):
    ELU = "elu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    LINEAR = "linear"


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("Dense dimensions must be positive")


@dataclass(frozen=True)
class Conv1D:
    in_channels: int
    out_channels: int
    kernel: int

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel) < 1:
            raise ValueError("Conv1D dimensions must be positive")


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")


@dataclass(frozen=True)
class Activation:
    kind: Act

    def __post_init__(self):
        object.__setattr__(self, "kind", Act(self.kind))


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Dense | Conv1D | Dropout | Activation | Flatten


def param_shapes(layer) -> dict[str, tuple[int, ...]]:
    if isinstance(layer, Dense):
        return {"W": (layer.in_dim, layer.out_dim), "b": (layer.out_dim,)}
    if isinstance(layer, Conv1D):
        return {
            "W": (layer.out_channels, layer.in_channels, layer.kernel),
            "b": (layer.out_channels,),
        }
    return {}


def glorot_limit(layer) -> float:
    if isinstance(layer, Dense):
        fan_in, fan_out = layer.in_dim, layer.out_dim
    else:
        fan_in = layer.in_channels * layer.kernel
        fan_out = layer.out_channels * layer.kernel
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


# activations ---------------------------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def act_forward(kind: Act, z: np.ndarray) -> np.ndarray:
    if kind is Act.ELU:
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    if kind is Act.TANH:
        return np.tanh(z)
    if kind is Act.SIGMOID:
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if kind is Act.SOFTMAX:
        return _softmax(z)
    return z


def act_backward(kind: Act, z: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    if kind is Act.ELU:
        return g * np.where(z > 0, 1.0, y + 1.0)
    if kind is Act.TANH:
        return g * (1.0 - y * y)
    if kind is Act.SIGMOID:
        return g * y * (1.0 - y)
    if kind is Act.SOFTMAX:
        return y * (g - (g * y).sum(axis=-1, keepdims=True))
    return g


# convolution ---------------------------------------------------------------


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return output (B, O, L-K+1) and the im2col matrix used to compute it."""
    n, c, length = x.shape
    o, _, k = w.shape
    lout = length - k + 1
    cols = sliding_window_view(x, k, axis=2)  # (B, C, Lout, K)
    cols = cols.transpose(0, 2, 1, 3).reshape(n * lout, c * k)
    y = cols @ w.reshape(o, c * k).T + b
    return y.reshape(n, lout, o).transpose(0, 2, 1), cols


def conv1d_backward(g: np.ndarray, cols: np.ndarray, x_shape, w: np.ndarray):
    n, c, length = x_shape
    o, _, k = w.shape
    lout = length - k + 1
    g2 = g.transpose(0, 2, 1).reshape(n * lout, o)
    dw = (g2.T @ cols).reshape(w.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ w.reshape(o, c * k)).reshape(n, lout, c, k)
    dx = np.zeros(x_shape)
    for j in range(k):
        dx[:, :, j : j + lout] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dx, dw, db


# sequential ----------------------------------------------------------------


@dataclass(frozen=True)
class Sequential:
    """A named stack of layers. Parameter names are ``{prefix}.{index}.{W|b}``."""

    prefix: str
    layers: tuple

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for i, layer in enumerate(self.layers):
            for key, shape in param_shapes(layer).items():
                out[f"{self.prefix}.{i}.{key}"] = shape
        return out

    def init(self, rng: Rng) -> Parameters:
        tensors = {}
        for i, layer in enumerate(self.layers):
            shapes = param_shapes(layer)
            if not shapes:
                continue
            lim = glorot_limit(layer)
            w = rng.uniform(-lim, lim, int(np.prod(shapes["W"]))).reshape(shapes["W"])
            tensors[f"{self.prefix}.{i}.W"] = w
            tensors[f"{self.prefix}.{i}.b"] = np.zeros(shapes["b"])
        return Parameters(tensors)

    def forward(self, params, x, train: bool = False, rng: Rng | None = None):
        return forward(self, params, x, train, rng)

    def backward(self, params, cache, grad_out):
        return backward(self, params, cache, grad_out)


def _name(net: Sequential, i: int) -> str:
    return f"{net.prefix}.{i} ({type(net.layers[i]).__name__})"


def forward(net: Sequential, params, x: np.ndarray, train: bool = False, rng: Rng | None = None):
    """Run ``net``; returns ``(output, cache)``. The cache is None in eval mode.

    Dropout is active only when ``train`` is true and uses inverted scaling.
    """
    cache = [] if train else None
    h = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Dense):
            if h.ndim != 2 or h.shape[1] != layer.in_dim:
                raise ShapeError(f"{_name(net, i)}: expected width {layer.in_dim}, got {h.shape}")
            out = h @ params[f"{net.prefix}.{i}.W"] + params[f"{net.prefix}.{i}.b"]
            entry = h
        elif isinstance(layer, Conv1D):
            hin = h[:, None, :] if h.ndim == 2 and layer.in_channels == 1 else h
            if hin.ndim != 3 or hin.shape[1] != layer.in_channels:
                raise ShapeError(f"{_name(net, i)}: expected {layer.in_channels} channels, got {h.shape}")
            if hin.shape[2] < layer.kernel:
                raise ShapeError(f"{_name(net, i)}: length {hin.shape[2]} shorter than kernel")
            out, cols = conv1d_forward(hin, params[f"{net.prefix}.{i}.W"], params[f"{net.prefix}.{i}.b"])
            entry = (h.shape, hin.shape, cols)
        elif isinstance(layer, Dropout):
            if train and layer.rate > 0:
                if rng is None:
                    raise ValueError("dropout in train mode needs an rng")
                keep = 1.0 - layer.rate
                mask = (rng.random(h.size).reshape(h.shape) >= layer.rate) / keep
                out = h * mask
                entry = mask
            else:
                out, entry = h, None
        elif isinstance(layer, Activation):
            out = act_forward(layer.kind, h)
            entry = (h, out)
        elif isinstance(layer, Flatten):
            out = h.reshape(h.shape[0], -1)
            entry = h.shape
        else:
            raise TypeError(f"unknown layer {layer!r}")
        if cache is not None:
            cache.append(entry)
        h = out
    return h, cache


def backward(net: Sequential, params, cache, grad_out: np.ndarray):
    """Backpropagate ``grad_out``; returns ``(grads, grad_input)``."""
    if cache is None or len(cache) != len(net.layers):
        raise CacheError(f"{net.prefix}: backward needs the cache of a train-mode forward")
    grads = {}
    g = np.asarray(grad_out, dtype=np.float64)
    for i in range(len(net.layers) - 1, -1, -1):
        layer, entry = net.layers[i], cache[i]
        if isinstance(layer, Dense):
            grads[f"{net.prefix}.{i}.W"] = entry.T @ g
            grads[f"{net.prefix}.{i}.b"] = g.sum(axis=0)
            g = g @ params[f"{net.prefix}.{i}.W"].T
        elif isinstance(layer, Conv1D):
            orig_shape, in_shape, cols = entry
            g, dw, db = conv1d_backward(g, cols, in_shape, params[f"{net.prefix}.{i}.W"])
            grads[f"{net.prefix}.{i}.W"] = dw
            grads[f"{net.prefix}.{i}.b"] = db
            g = g.reshape(orig_shape)
        elif isinstance(layer, Dropout):
            if entry is not None:
                g = g * entry
        elif isinstance(layer, Activation):
            z, y = entry
            g = act_backward(layer.kind, z, y, g)
        elif isinstance(layer, Flatten):
            g = g.reshape(entry)
    ordered = {k: grads[k] for k in net.param_shapes()}
    return Parameters(ordered), g
