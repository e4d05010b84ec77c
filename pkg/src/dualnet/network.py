"""Plain, dense, transition and residual blocks and the full networks built from them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import ArchitectureConfig
from .exceptions import ConfigError, ShapeError
from .layers import (
    GRU,
    BatchNorm,
    ClassifierHead,
    DepthwiseSeparableConv1d,
    Dropout,
    GlobalAveragePool,
    Linear,
    LinearBridge,
    MaxPool1d,
    Module,
    ReLU,
    SelfAttention,
)
from .tensor import Tensor

PLAIN_LAYERS = 7
PLAIN_PARAM_LAYERS = 4


class PlainBlock(Module):
    """DSC -> GRU -> BatchNorm -> ReLU -> MaxPool -> Dropout -> LinearBridge."""

    n_layers = PLAIN_LAYERS
    n_param_layers = PLAIN_PARAM_LAYERS

    def __init__(self, c_in: int, c_out: int, cfg: ArchitectureConfig, rng: np.random.Generator):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.dsc = DepthwiseSeparableConv1d(c_in, c_out, cfg.kernel_size, rng)
        self.gru = GRU(c_out, c_out, rng)
        self.bn = BatchNorm(c_out, momentum=cfg.bn_momentum)
        self.relu = ReLU()
        self.pool = MaxPool1d(cfg.pool_size, cfg.pool_stride)
        self.dropout = Dropout(cfg.dropout_rate)
        self.bridge = LinearBridge(c_out, c_out, rng)

    @staticmethod
    def count(c_in, c_out, kernel_size):
        return (
            DepthwiseSeparableConv1d.count(c_in, c_out, kernel_size)
            + GRU.count(c_out, c_out)
            + 2 * c_out
            + Linear.count(c_out, c_out)
        )

    def forward(self, x, training=False, rng=None):
        for layer in (self.dsc, self.gru, self.bn, self.relu, self.pool, self.dropout, self.bridge):
            x = layer(x, training=training, rng=rng)
        return x


def _merge(xs, connectivity):
    if connectivity == "concat":
        return T.concat_channels(xs)
    out = xs[0]
    for t in xs[1:]:
        out = T.add(out, t)
    return out


class DenseBlock(Module):
    """``growth_rate`` plain blocks; each sees the merge of the block input and all earlier outputs.

    With ``concat`` the output has ``(k+1)·c_base`` channels; with ``add``
    every merge is a sum and the width stays ``c_base``.
    """

    def __init__(self, c_base: int, growth_rate: int, cfg: ArchitectureConfig, rng, connectivity: str | None = None):
        super().__init__()
        if growth_rate < 1:
            raise ConfigError(f"growth rate must be at least 1, got {growth_rate}")
        self.c_base, self.growth_rate = c_base, growth_rate
        self.connectivity = connectivity or cfg.connectivity
        self.plains = []
        for i in range(1, growth_rate + 1):
            c_in = i * c_base if self.connectivity == "concat" else c_base
            block = PlainBlock(c_in, c_base, cfg, rng)
            if self.connectivity == "add" and block.c_out != block.c_in:
                raise ConfigError("add connectivity needs width-preserving plain blocks")
            self.plains.append(self.add_module(str(i - 1), block))
        self.c_in = c_base
        self.c_out = (growth_rate + 1) * c_base if self.connectivity == "concat" else c_base

    @property
    def n_layers(self):
        return PLAIN_LAYERS * self.growth_rate

    @property
    def n_param_layers(self):
        return PLAIN_PARAM_LAYERS * self.growth_rate

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.c_in:
            raise ShapeError(f"dense block expects {self.c_in} channels, got {x.shape[-1]}")
        feats = [x]
        for block in self.plains:
            feats.append(block(_merge(feats, self.connectivity), training=training, rng=rng))
        return _merge(feats, self.connectivity)


class ResidualBlock(Module):
    """``plain(x) + x`` with an identity shortcut."""

    n_layers = PLAIN_LAYERS
    n_param_layers = PLAIN_PARAM_LAYERS

    def __init__(self, c_in: int, cfg: ArchitectureConfig, rng, c_out: int | None = None):
        super().__init__()
        c_out = c_in if c_out is None else c_out
        if c_out != c_in:
            raise ConfigError(f"residual add needs equal widths, got {c_in} -> {c_out}")
        self.c_in = self.c_out = c_in
        self.plain = PlainBlock(c_in, c_out, cfg, rng)

    def forward(self, x, training=False, rng=None):
        return T.add(self.plain(x, training=training, rng=rng), x)


def build_plain_block(c_in: int, c_out: int, cfg: ArchitectureConfig, rng=None) -> PlainBlock:
    return PlainBlock(c_in, c_out, cfg, rng or np.random.default_rng(cfg.seed))


def build_dense_block(c_base: int, k: int, cfg: ArchitectureConfig, rng=None) -> DenseBlock:
    return DenseBlock(c_base, k, cfg, rng or np.random.default_rng(cfg.seed))


def build_transition_block(c_in: int, c_base: int, cfg: ArchitectureConfig, rng=None) -> PlainBlock:
    """A plain block whose pointwise convolution maps ``c_in`` back down to ``c_base``."""
    return PlainBlock(c_in, c_base, cfg, rng or np.random.default_rng(cfg.seed))


def build_residual_block(c: int, cfg: ArchitectureConfig, rng=None, c_out: int | None = None) -> ResidualBlock:
    return ResidualBlock(c, cfg, rng or np.random.default_rng(cfg.seed), c_out=c_out)


@dataclass
class BlockSpec:
    kind: str
    c_in: int
    c_out: int
    n_layers: int
    n_param_layers: int
    n_params: int


@dataclass
class NetworkPlan:
    """Block-by-block channel accounting plus layer and parameter totals."""

    blocks: list = field(default_factory=list)
    n_layers: int = 0
    n_param_layers: int = 0
    n_params: int = 0

    def check_chain(self):
        for prev, nxt in zip(self.blocks, self.blocks[1:]):
            if prev.c_out != nxt.c_in:
                raise ShapeError(f"{prev.kind} outputs {prev.c_out} channels but {nxt.kind} expects {nxt.c_in}")

    def summary(self) -> str:
        lines = [f"{'block':<12}{'c_in':>6}{'c_out':>7}{'layers':>8}{'params':>9}"]
        for b in self.blocks:
            lines.append(f"{b.kind:<12}{b.c_in:>6}{b.c_out:>7}{b.n_layers:>8}{b.n_params:>9}")
        lines.append(f"total layers {self.n_layers} ({self.n_param_layers} parameter layers), "
                     f"{self.n_params} trainable parameters")
        return "\n".join(lines)


class Network(Module):
    """Stem -> blocks -> [self-attention] -> global average pool -> classifier head.

    The encoded record ``x[b, F]`` is read as a length-``F`` sequence with one
    channel; the stem is a pointwise convolution to ``stem_width`` channels.
    """

    def __init__(self, cfg: ArchitectureConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        c = cfg.stem_width
        self.stem = Linear(1, c, rng)
        self.blocks = []
        width = c
        if cfg.family == "plainstack":
            for _ in range(cfg.n_blocks):
                self._add_block(PlainBlock(width, c, cfg, rng))
        elif cfg.family == "residual":
            for _ in range(cfg.n_blocks):
                self._add_block(ResidualBlock(width, cfg, rng))
        else:
            for i in range(cfg.n_blocks):
                dense = self._add_block(DenseBlock(c, cfg.growth_rate, cfg, rng))
                width = dense.c_out
                if i < cfg.n_blocks - 1:
                    width = self._add_block(PlainBlock(width, c, cfg, rng), kind="transition").c_out
        width = self.blocks[-1].c_out
        self.attention = None
        if cfg.attention:
            self.attention = SelfAttention(
                width, cfg.attention_width, cfg.attention_projections, cfg.attention_scaled, rng
            )
            width = self.attention.width
        self.gap = GlobalAveragePool()
        self.head = ClassifierHead(width, cfg.n_classes, rng)
        self.plan = self._plan()

    def _add_block(self, block, kind=None):
        block.kind = kind or {PlainBlock: "plain", DenseBlock: "dense", ResidualBlock: "residual"}[type(block)]
        self.add_module(f"b{len(self.blocks)}", block)
        self.blocks.append(block)
        return block

    def _plan(self) -> NetworkPlan:
        plan = NetworkPlan()
        for b in self.blocks:
            plan.blocks.append(BlockSpec(b.kind, b.c_in, b.c_out, b.n_layers, b.n_param_layers, b.num_params()))
        plan.check_chain()
        # stem (the input layer), global average pooling and the dense head
        plan.n_layers = sum(b.n_layers for b in self.blocks) + 3
        plan.n_param_layers = sum(b.n_param_layers for b in self.blocks) + 1
        if self.attention is not None:
            plan.n_layers += 1
            plan.n_param_layers += self.attention.n_param_layers
        plan.n_params = self.num_params()
        return plan

    def feature_map(self, x, training=False, rng=None):
        """Encoded records ``[b, F]`` -> block-stack output ``[b, L, c]``."""
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.stem.weight.dtype)
        if x.ndim != 2:
            raise ShapeError(f"network input must be [batch, features], got {x.shape}")
        if self.cfg.n_features is not None and x.shape[1] != self.cfg.n_features:
            raise ShapeError(f"network expects {self.cfg.n_features} features, got {x.shape[1]}")
        h = self.stem(T.reshape(x, x.shape + (1,)))
        for block in self.blocks:
            h = block(h, training=training, rng=rng)
        return h

    def forward(self, x, training=False, rng=None, return_attention=False):
        h = self.feature_map(x, training=training, rng=rng)
        weights = None
        if self.attention is not None:
            h, weights = self.attention(h, training=training, rng=rng)
        probs = self.head(self.gap(h))
        return (probs, weights) if return_attention else probs

    def __call__(self, x, training=False, rng=None, return_attention=False):
        return self.forward(x, training=training, rng=rng, return_attention=return_attention)


def build_network(cfg: ArchitectureConfig) -> tuple[Network, NetworkPlan]:
    net = Network(cfg)
    return net, net.plan


def count_params(model: Module) -> int:
    return model.num_params()


def expected_params(cfg: ArchitectureConfig) -> int:
    """Parameter total from the per-layer formulas, without building anything."""
    c, K = cfg.stem_width, cfg.kernel_size
    total = Linear.count(1, c)
    if cfg.family in ("plainstack", "residual"):
        total += cfg.n_blocks * PlainBlock.count(c, c, K)
        width = c
    else:
        concat = cfg.connectivity == "concat"
        dense_out = (cfg.growth_rate + 1) * c if concat else c
        dense = sum(PlainBlock.count(i * c if concat else c, c, K) for i in range(1, cfg.growth_rate + 1))
        total += cfg.n_blocks * dense + (cfg.n_blocks - 1) * PlainBlock.count(dense_out, c, K)
        width = dense_out
    if cfg.attention:
        d = width if cfg.attention_width is None else cfg.attention_width
        if cfg.attention_projections:
            total += SelfAttention.count(width, d)
        width = d
    return total + Linear.count(width, cfg.n_classes)


def dense_width(c_base: int, k: int, m: int = 1) -> int:
    """Channels after ``m`` concat dense blocks stacked with no transitions."""
    return (k + 1) ** m * c_base
