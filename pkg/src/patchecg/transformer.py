"""Pre-norm transformer encoder over a variable-length token sequence."""
from dataclasses import dataclass

import numpy as np

from .nn import LayerNorm, Linear, Module
from .tensor import activation, mul, reshape, softmax, swapaxes


@dataclass
class TransformerConfig:
    D: int = 64
    layers: int = 3
    heads: int = 8
    ffn_mult: int = 4
    activation: str = "relu"
    dropout: float = 0.0

    def validate(self):
        if self.D % self.heads:
            raise ValueError(f"model width {self.D} is not divisible by {self.heads} heads")
        if self.layers < 0:
            raise ValueError("layer count must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


def dropout(x, p, rng):
    if not p or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return mul(x, keep)


class MultiHeadAttention(Module):
    def __init__(self, D, heads, rng, dtype=np.float32):
        if D % heads:
            raise ValueError(f"model width {D} is not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(D, D, rng, dtype)
        self.k = Linear(D, D, rng, dtype)
        self.v = Linear(D, D, rng, dtype)
        self.o = Linear(D, D, rng, dtype)

    def _split(self, x):
        n, D = x.shape
        return swapaxes(reshape(x, (n, self.heads, D // self.heads)), 0, 1)  # (h, n, dh)

    def forward(self, x):
        """Return ``(output, attention)`` with attention of shape ``(h, n, n)``."""
        n, D = x.shape
        dh = D // self.heads
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = (q @ swapaxes(k, 1, 2)) * (1.0 / np.sqrt(dh))
        attn = softmax(scores, axis=-1)
        mixed = reshape(swapaxes(attn @ v, 0, 1), (n, D))
        return self.o(mixed), attn.data


class EncoderLayer(Module):
    """``H + mha(norm(H))`` followed by ``H + ffn(norm(H))``."""

    def __init__(self, config, rng, dtype=np.float32):
        D = config.D
        self.norm1 = LayerNorm(D, dtype)
        self.attn = MultiHeadAttention(D, config.heads, rng, dtype)
        self.norm2 = LayerNorm(D, dtype)
        self.ff1 = Linear(D, config.ffn_mult * D, rng, dtype)
        self.ff2 = Linear(config.ffn_mult * D, D, rng, dtype)
        self.act = activation(config.activation)
        self.dropout = config.dropout

    def forward(self, h, rng=None):
        a, weights = self.attn(self.norm1(h))
        h = h + dropout(a, self.dropout, rng)
        f = self.ff2(self.act(self.ff1(self.norm2(h))))
        return h + dropout(f, self.dropout, rng), weights


class TransformerEncoder(Module):
    def __init__(self, config, rng, dtype=np.float32):
        config.validate()
        self.layers = [EncoderLayer(config, rng, dtype) for _ in range(config.layers)]

    def forward(self, h, return_attention=False, rng=None):
        """Apply every layer in sequence.

        With ``return_attention`` the result is ``(H, attention)`` where
        attention is a ``(K, heads, n, n)`` array.
        """
        maps = []
        for layer in self.layers:
            h, weights = layer(h, rng)
            maps.append(weights)
        if not return_attention:
            return h
        n = h.shape[0]
        stacked = np.stack(maps) if maps else np.zeros((0, 0, n, n), dtype=h.dtype)
        return h, stacked
