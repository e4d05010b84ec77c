"""Parameterized and stateless layers over ``[batch, length, channels]`` feature maps."""
from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import functional as F
from . import tensor as T
from .exceptions import ConfigError, ShapeError
from .tensor import Tensor


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Holds named parameters, non-trainable buffers and child modules.

    Children assigned as attributes (or via :meth:`add_module`) are walked in
    assignment order, which fixes the hierarchical parameter names.
    """

    n_layers = 1
    n_param_layers = 0

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        object.__setattr__(self, name, t)
        return t

    def add_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = np.array(value, dtype=T.default_dtype())

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, arr in self._buffers.items():
            yield prefix + name, arr
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def set_buffer(self, dotted: str, value: np.ndarray):
        *path, leaf = dotted.split(".")
        mod = self
        for part in path:
            mod = mod._children[part]
        if leaf not in mod._buffers:
            raise KeyError(dotted)
        mod._buffers[leaf] = np.array(value, dtype=mod._buffers[leaf].dtype)

    def num_params(self) -> int:
        return sum(t.size for t in self.parameters())

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None):
        return self.forward(x, training=training, rng=rng)

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError


class DepthwiseSeparableConv1d(Module):
    """Per-channel K-tap filter followed by a pointwise channel mix (bias on the pointwise part)."""

    n_param_layers = 1

    def __init__(self, c_in: int, c_out: int, kernel_size: int = 3, rng=None):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {kernel_size}")
        rng = rng or np.random.default_rng(0)
        self.c_in, self.c_out, self.kernel_size = c_in, c_out, kernel_size
        self.add_param("depthwise", glorot_uniform(rng, (kernel_size, c_in), kernel_size, kernel_size))
        self.add_param("pointwise", glorot_uniform(rng, (c_in, c_out), c_in, c_out))
        self.add_param("bias", np.zeros(c_out))

    @staticmethod
    def count(c_in, c_out, kernel_size):
        return kernel_size * c_in + c_in * c_out + c_out

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.c_in:
            raise ShapeError(f"DSC expects {self.c_in} input channels, got {x.shape[-1]}")
        y = F.depthwise_conv1d(x, self.depthwise)
        return T.add_bias(T.linear(y, self.pointwise), self.bias)


class GRU(Module):
    n_param_layers = 1

    def __init__(self, c_in: int, hidden: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.c_in, self.hidden = c_in, hidden
        self.add_param("w", np.stack([glorot_uniform(rng, (c_in, hidden), c_in, hidden) for _ in range(3)]))
        self.add_param("u", np.stack([glorot_uniform(rng, (hidden, hidden), hidden, hidden) for _ in range(3)]))
        self.add_param("b", np.zeros((3, hidden)))

    @staticmethod
    def count(c_in, hidden):
        return 3 * (c_in * hidden + hidden * hidden + hidden)

    def forward(self, x, training=False, rng=None):
        return F.gru_scan(x, self.w, self.u, self.b)


class BatchNorm(Module):
    n_param_layers = 1

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-5):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.add_param("gamma", np.ones(channels))
        self.add_param("beta", np.zeros(channels))
        self.add_buffer("running_mean", np.zeros(channels))
        self.add_buffer("running_var", np.ones(channels))

    def forward(self, x, training=False, rng=None):
        if not training:
            return F.batchnorm_infer(
                x, self.gamma, self.beta, self._buffers["running_mean"], self._buffers["running_var"], self.eps
            )
        if x.shape[0] < 2:
            raise ShapeError("batch norm in train mode needs a batch of at least 2")
        out, mean, var = F.batchnorm_train(x, self.gamma, self.beta, self.eps)
        m = self.momentum
        self._buffers["running_mean"] = m * self._buffers["running_mean"] + (1 - m) * mean
        self._buffers["running_var"] = m * self._buffers["running_var"] + (1 - m) * var
        return out


class ReLU(Module):
    def forward(self, x, training=False, rng=None):
        return T.relu(x)


class MaxPool1d(Module):
    def __init__(self, size: int = 2, stride: int = 1):
        super().__init__()
        self.size, self.stride = size, stride

    def out_length(self, length: int) -> int:
        return F.same_padding(length, self.size, self.stride)[0]

    def forward(self, x, training=False, rng=None):
        return F.maxpool1d(x, self.size, self.stride)


class Dropout(Module):
    """Inverted dropout; identity at inference."""

    def __init__(self, rate: float = 0.4):
        super().__init__()
        if not 0 <= rate < 1:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0:
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an explicit rng")
        keep = rng.random(x.shape) >= self.rate
        mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return T.mul(x, T.constant(mask, dtype=x.dtype))


class Linear(Module):
    """Position-wise affine map (same weights at every position), no activation."""

    n_param_layers = 1

    def __init__(self, c_in: int, c_out: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.c_in, self.c_out = c_in, c_out
        self.add_param("weight", glorot_uniform(rng, (c_in, c_out), c_in, c_out))
        self.add_param("bias", np.zeros(c_out))

    @staticmethod
    def count(c_in, c_out):
        return c_in * c_out + c_out

    def forward(self, x, training=False, rng=None):
        return T.add_bias(T.linear(x, self.weight), self.bias)


# the bridge at the end of every plain block is a plain position-wise affine layer
LinearBridge = Linear


class SelfAttention(Module):
    """Single-head scaled dot-product self-attention over sequence positions.

    Returns ``(out, weights)`` where ``weights[b, i, j]`` is the softmax
    attention row of position ``i``. With ``projections=False`` the queries,
    keys and values are the input itself and the layer has no parameters.
    """

    n_param_layers = 1

    def __init__(self, channels: int, width: int | None = None, projections: bool = True,
                 scaled: bool = True, rng=None):
        super().__init__()
        width = channels if width is None else width
        if width < 1:
            raise ConfigError(f"attention width must be positive, got {width}")
        if not projections and width != channels:
            raise ConfigError("attention without projections keeps the input width")
        rng = rng or np.random.default_rng(0)
        self.channels, self.width, self.projections, self.scaled = channels, width, projections, scaled
        if projections:
            for name in ("w_q", "w_k", "w_v"):
                self.add_param(name, glorot_uniform(rng, (channels, width), channels, width))
        else:
            self.n_param_layers = 0

    @staticmethod
    def count(channels, width):
        return 3 * channels * width

    def forward(self, x, training=False, rng=None):
        if self.projections:
            q, k, v = (T.linear(x, w) for w in (self.w_q, self.w_k, self.w_v))
        else:
            q = k = v = x
        scores = T.bmm(q, T.transpose_last(k))
        if self.scaled:
            scores = T.scale(scores, 1.0 / math.sqrt(self.width))
        weights = T.softmax_rows(scores)
        return T.bmm(weights, v), weights


class GlobalAveragePool(Module):
    def forward(self, x, training=False, rng=None):
        return T.mean_axis(x, 1)


class ClassifierHead(Module):
    """Affine map to class scores followed by a row softmax."""

    n_param_layers = 1

    def __init__(self, c_in: int, n_classes: int, rng=None):
        super().__init__()
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        rng = rng or np.random.default_rng(0)
        self.c_in, self.n_classes = c_in, n_classes
        self.add_param("weight", glorot_uniform(rng, (c_in, n_classes), c_in, n_classes))
        self.add_param("bias", np.zeros(n_classes))

    def forward(self, x, training=False, rng=None):
        return T.softmax_rows(T.add_bias(T.matmul(x, self.weight), self.bias))
