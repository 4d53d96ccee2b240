"""Patch encoders mapping ``2 x P`` patches to ``D``-dimensional embeddings.

Every encoder takes a tensor of shape ``(N, 2, P)`` (or a single ``(2, P)``
patch) and returns ``(N, D)`` (or ``(D,)``). Encoders see one patch at a time
and never its position; lead and time information is added afterwards.
"""
from dataclasses import dataclass, field

import numpy as np

from .nn import Linear, Module, parameter, uniform_init
from .tensor import ShapeError, Tensor, conv1d, global_avg_pool, layer_norm, relu, reshape, sigmoid


@dataclass
class EncoderConfig:
    variant: str = "projection"
    P: int = 64
    D: int = 64
    base_filters: int = 16
    kernel: int = 16
    filter_list: list = field(default_factory=lambda: [16, 32, 32, 40, 40, 64, 64])
    blocks_per_stage: int = 2
    se_reduction: int = 2

    def validate(self):
        if self.variant not in ("projection", "net1d"):
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.D < 1 or self.P < 1:
            raise ValueError("P and D must be positive")
        if self.variant == "net1d":
            if not self.filter_list:
                raise ValueError("filter_list must be non-empty")
            if self.kernel > self.P:
                raise ValueError(f"kernel {self.kernel} exceeds the temporal extent {self.P}")
            if self.blocks_per_stage < 1 or self.se_reduction < 1:
                raise ValueError("blocks_per_stage and se_reduction must be positive")


def _as_batch(x, P):
    if not isinstance(x, Tensor):
        x = Tensor(x)
    single = x.ndim == 2
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 3 or x.shape[1:] != (2, P):
        raise ShapeError(f"encoder expects patches of shape (2, {P}), got {x.shape}")
    return x, single


class ProjectionEncoder(Module):
    """Flatten the two rows and apply one affine map to ``D``."""

    def __init__(self, P, D, rng, dtype=np.float32):
        self.P = P
        self.proj = Linear(2 * P, D, rng, dtype)

    def forward(self, x):
        x, single = _as_batch(x, self.P)
        out = self.proj(reshape(x, (x.shape[0], 2 * self.P)))
        return reshape(out, (out.shape[1],)) if single else out


class SqueezeExcite(Module):
    def __init__(self, channels, reduction, rng, dtype):
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng, dtype)
        self.fc2 = Linear(hidden, channels, rng, dtype)

    def forward(self, x):
        squeezed = global_avg_pool(x)  # (B, C)
        gate = sigmoid(self.fc2(relu(self.fc1(squeezed))))
        return x * reshape(gate, gate.shape + (1,))


class ConvBlock(Module):
    """conv -> channel norm -> ReLU -> squeeze-excitation, plus a residual path."""

    def __init__(self, c_in, c_out, kernel, reduction, rng, dtype):
        fan_in = c_in * kernel
        self.weight = uniform_init(rng, (c_out, c_in, kernel), fan_in, dtype)
        self.bias = uniform_init(rng, (c_out,), fan_in, dtype)
        self.norm_gain = parameter(np.ones((c_out, 1)), dtype)
        self.norm_bias = parameter(np.zeros((c_out, 1)), dtype)
        self.se = SqueezeExcite(c_out, reduction, rng, dtype)
        if c_in != c_out:
            self.skip = uniform_init(rng, (c_out, c_in, 1), c_in, dtype)
        else:
            self.skip = None

    def forward(self, x):
        h = conv1d(x, self.weight, self.bias)
        h = layer_norm(h, self.norm_gain, self.norm_bias, axis=1)
        h = self.se(relu(h))
        shortcut = conv1d(x, self.skip, padding=(0, 0)) if self.skip is not None else x
        return h + shortcut


class Net1DEncoder(Module):
    """Residual 1-D CNN with squeeze-excitation blocks, stride 1 throughout."""

    def __init__(self, config, rng, dtype=np.float32):
        config.validate()
        self.P = config.P
        k = config.kernel
        fan_in = 2 * k
        self.stem_weight = uniform_init(rng, (config.base_filters, 2, k), fan_in, dtype)
        self.stem_bias = uniform_init(rng, (config.base_filters,), fan_in, dtype)
        blocks = []
        channels = config.base_filters
        for width in config.filter_list:
            for _ in range(config.blocks_per_stage):
                blocks.append(ConvBlock(channels, width, k, config.se_reduction, rng, dtype))
                channels = width
        self.blocks = blocks
        self.out = Linear(channels, config.D, rng, dtype)

    def forward(self, x):
        x, single = _as_batch(x, self.P)
        h = conv1d(x, self.stem_weight, self.stem_bias)
        for block in self.blocks:
            h = block(h)
        out = self.out(global_avg_pool(h))
        return reshape(out, (out.shape[1],)) if single else out


class FrozenEncoder(Module):
    """Wraps an externally supplied, non-trainable patch encoder.

    ``fn`` maps a numpy ``(N, 2, P)`` array to ``(N, D)``. Its output carries
    no gradient; weights, if any, live inside ``fn``.
    """

    def __init__(self, fn, P, D):
        self.fn = fn
        self.P = P
        self.D = D

    def forward(self, x):
        x, single = _as_batch(x, self.P)
        out = np.asarray(self.fn(x.data), dtype=x.dtype)
        if out.shape != (x.shape[0], self.D):
            raise ShapeError(f"frozen encoder returned {out.shape}, expected {(x.shape[0], self.D)}")
        return Tensor(out[0] if single else out)


def build_encoder(config, rng, dtype=np.float32):
    config.validate()
    if config.variant == "projection":
        return ProjectionEncoder(config.P, config.D, rng, dtype)
    return Net1DEncoder(config, rng, dtype)

