"""The separable-convolution residual classifier.

Entry block (3x3 conv, stride 2, batch norm, ReLU) feeding L residual
blocks. Each block runs ReLU -> SepConv -> BN -> ReLU -> SepConv -> BN ->
3x3/2 max pooling on the main path while a 1x1 stride-2 convolution (no
activation, no bias) projects the block input onto the same shape; the two
are summed. Block i carries sep_filters_0 * 2**(i-1) filters. A global
average pool, dropout, one or more ReLU dense layers and a 2-way softmax
close the network.

The entry stride halves the map once and every block halves it again, so a
square input of side S leaves a feature map of side ceil(S / 2**(L+1)).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool2D,
    ReLU,
    SepConv2D,
)
from .losses import cross_entropy_logit_grad, softmax, weighted_cross_entropy

N_CLASSES = 2
NEGATIVE, POSITIVE = 0, 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters (defaults are the tuned 500 m setup)."""

    activation: str = "relu"
    entry_filters: int = 8
    kernel: int = 3
    sep_filters_0: int = 8
    n_blocks: int = 7
    global_pool: str = "avg"
    n_dense: int = 1
    dense_units: int = 8
    dropout_rate: float = 0.5
    batchnorm: bool = True
    lr: float = 1e-3

    def __post_init__(self):
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.global_pool != "avg":
            raise ValueError(f"unsupported global pooling {self.global_pool!r}")
        if self.n_blocks < 1 or self.n_dense < 1:
            raise ValueError("n_blocks and n_dense must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if min(self.entry_filters, self.sep_filters_0, self.dense_units) < 1:
            raise ValueError("filter and unit counts must be positive")

    def block_filters(self, i: int) -> int:
        """Filters in block i (0-based): doubling from sep_filters_0."""
        return self.sep_filters_0 * (2**i)


# Tuned configurations per input resolution; only depth, dropout and
# learning rate differ across them.
RESOLUTION_PRESETS = {
    "500m": ModelConfig(n_blocks=7, dropout_rate=0.5, lr=1e-3),
    "1km": ModelConfig(n_blocks=5, dropout_rate=0.4, lr=1e-2),
    "2km": ModelConfig(n_blocks=4, dropout_rate=0.6, lr=1e-3),
}


class ResidualBlock:
    def __init__(self, cin, cout, kernel, batchnorm, rng, dtype):
        self.relu1 = ReLU()
        self.sep1 = SepConv2D(kernel, kernel, cin, cout, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2D(cout, dtype=dtype) if batchnorm else None
        self.relu2 = ReLU()
        self.sep2 = SepConv2D(kernel, kernel, cout, cout, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2D(cout, dtype=dtype) if batchnorm else None
        self.pool = MaxPool2D(3, 2)
        self.skip = Conv2D(1, 1, cin, cout, stride=2, bias=False, rng=rng, dtype=dtype)

    def sublayers(self):
        named = [("sep1", self.sep1), ("bn1", self.bn1), ("sep2", self.sep2), ("bn2", self.bn2), ("skip", self.skip)]
        return [(n, l) for n, l in named if l is not None]

    def forward(self, x, train=False, rng=None):
        if x.shape[1] < 2 or x.shape[2] < 2:
            raise ValueError(f"residual block needs spatial dims >= 2, got {x.shape[1]}x{x.shape[2]}")
        h = self.relu1.forward(x, train)
        h = self.sep1.forward(h, train)
        if self.bn1 is not None:
            h = self.bn1.forward(h, train)
        h = self.relu2.forward(h, train)
        h = self.sep2.forward(h, train)
        if self.bn2 is not None:
            h = self.bn2.forward(h, train)
        h = self.pool.forward(h, train)
        return h + self.skip.forward(x, train)

    def backward(self, dy):
        d = self.pool.backward(dy)
        if self.bn2 is not None:
            d = self.bn2.backward(d)
        d = self.sep2.backward(d)
        d = self.relu2.backward(d)
        if self.bn1 is not None:
            d = self.bn1.backward(d)
        d = self.sep1.backward(d)
        d = self.relu1.backward(d)
        return d + self.skip.backward(dy)


class Network:
    """Forward/backward engine with named parameters and block captures."""

    def __init__(self, config: ModelConfig, in_channels=3, seed=0, dtype=np.float32):
        self.config = config
        self.in_channels = in_channels
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        k = config.kernel
        self.entry_conv = Conv2D(k, k, in_channels, config.entry_filters, stride=2, bias=True, rng=rng, dtype=dtype)
        self.entry_bn = BatchNorm2D(config.entry_filters, dtype=dtype) if config.batchnorm else None
        self.entry_relu = ReLU()
        self.blocks = []
        cin = config.entry_filters
        for i in range(config.n_blocks):
            cout = config.block_filters(i)
            self.blocks.append(ResidualBlock(cin, cout, k, config.batchnorm, rng, dtype))
            cin = cout
        self.gap = GlobalAvgPool()
        self.dropout = Dropout(config.dropout_rate)
        self.dense = []
        fin = cin
        for _ in range(config.n_dense):
            self.dense.append(Dense(fin, config.dense_units, rng=rng, dtype=dtype))
            self.dense.append(ReLU())
            fin = config.dense_units
        self.out = Dense(fin, N_CLASSES, rng=rng, dtype=dtype)
        self.block_outputs = []
        self.logits = None

    # ---- parameter bookkeeping -------------------------------------------------

    def _named_layers(self):
        yield "entry.conv", self.entry_conv
        if self.entry_bn is not None:
            yield "entry.bn", self.entry_bn
        for i, blk in enumerate(self.blocks):
            for sub, layer in blk.sublayers():
                yield f"block{i + 1}.{sub}", layer
        for i in range(0, len(self.dense), 2):
            yield f"dense{i // 2 + 1}", self.dense[i]
        yield "out", self.out

    def parameters(self):
        """Ordered (name, array) pairs of trainable parameters."""
        out = []
        for lname, layer in self._named_layers():
            for key in sorted(layer.params):
                out.append((f"{lname}.{key}", layer.params[key]))
        return out

    def gradients(self):
        out = []
        for lname, layer in self._named_layers():
            for key in sorted(layer.params):
                out.append((f"{lname}.{key}", layer.grads[key]))
        return out

    def state_arrays(self):
        """Trainable parameters plus persistent state, in declaration order."""
        out = []
        for lname, layer in self._named_layers():
            for key in sorted(layer.params):
                out.append((f"{lname}.{key}", layer.params[key]))
            for key in sorted(layer.state):
                out.append((f"{lname}.{key}", layer.state[key]))
        return out

    def n_parameters(self) -> int:
        return sum(int(a.size) for _, a in self.parameters())

    # ---- forward / backward -----------------------------------------------------

    def forward(self, x, train=False, rng=None):
        """Class probabilities (batch, 2); logits cached on the instance."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(f"expected (batch, h, w, {self.in_channels}) input, got {x.shape}")
        h = self.entry_conv.forward(x, train)
        if self.entry_bn is not None:
            h = self.entry_bn.forward(h, train)
        h = self.entry_relu.forward(h, train)
        self.block_outputs = []
        for blk in self.blocks:
            h = blk.forward(h, train)
            self.block_outputs.append(h)
        v = self.gap.forward(h, train)
        v = self.dropout.forward(v, train, rng)
        for layer in self.dense:
            v = layer.forward(v, train)
        self.logits = self.out.forward(v, train)
        return softmax(self.logits)

    def backward_from_logits(self, dlogits, capture_block: int | None = None):
        """Backpropagate an upstream logit gradient.

        Returns (dx, captured) where dx is the loss gradient w.r.t. the
        input batch and captured is the gradient w.r.t. the chosen block's
        output (None unless requested).
        """
        d = self.out.backward(dlogits)
        for layer in reversed(self.dense):
            d = layer.backward(d)
        d = self.dropout.backward(d)
        d = self.gap.backward(d)
        captured = None
        for i in range(len(self.blocks) - 1, -1, -1):
            if capture_block is not None and i == capture_block:
                captured = d
            d = self.blocks[i].backward(d)
        d = self.entry_relu.backward(d)
        if self.entry_bn is not None:
            d = self.entry_bn.backward(d)
        d = self.entry_conv.backward(d)
        return d, captured

    def train_step_gradients(self, x, labels, weights=(1.0, 1.0), rng=None):
        """Forward in train mode, compute loss, backpropagate. Returns (loss, probs, dx)."""
        probs = self.forward(x, train=True, rng=rng)
        loss = weighted_cross_entropy(probs, labels, weights)
        dlogits = cross_entropy_logit_grad(probs, labels, weights)
        dx, _ = self.backward_from_logits(dlogits)
        return loss, probs, dx

    def config_dict(self) -> dict:
        return asdict(self.config)
