"""The full patch model: patching -> encoder -> assembly -> transformer -> head."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import (EmbeddingTables, S3, S3Config, TokenSequence, add_positional,
                       drop_missing, prepend_cls)
from .encoders import EncoderConfig, build_encoder
from .head import Head
from .nn import Module
from .patching import segment
from .tensor import Tensor, no_grad
from .transformer import TransformerConfig, TransformerEncoder

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class ModelConfig:
    n_leads: int = 12
    n_labels: int = 3
    P: int = 64
    t_max: int = 1000
    D: int = 64
    layers: int = 3
    heads: int = 8
    ffn_mult: int = 4
    activation: str = "relu"
    dropout: float = 0.0
    encoder: str = "projection"
    net1d: dict = field(default_factory=dict)  # overrides for EncoderConfig
    s3: bool = True
    s3_layers: int = 3
    s3_segments: int = 4
    s3_multiplier: int = 2
    s3_init_weight: float = 0.1
    dtype: str = "float32"
    seed: int = 0

    @property
    def n_times(self):
        return self.t_max // self.P

    def encoder_config(self):
        return EncoderConfig(variant=self.encoder, P=self.P, D=self.D, **self.net1d)

    def transformer_config(self):
        return TransformerConfig(D=self.D, layers=self.layers, heads=self.heads,
                                 ffn_mult=self.ffn_mult, activation=self.activation,
                                 dropout=self.dropout)

    def s3_config(self):
        return S3Config(self.s3_layers, self.s3_segments, self.s3_multiplier, self.s3_init_weight)

    def validate(self):
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")
        if self.n_times < 1:
            raise ValueError(f"t_max={self.t_max} holds no patch of size {self.P}")
        self.encoder_config().validate()
        self.transformer_config().validate()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Forward:
    """Everything produced by one forward pass over a record."""

    logits: Tensor
    tokens: TokenSequence  # CLS-prefixed, with (lead, time) of every non-CLS row
    attention: np.ndarray = None  # (K, heads, n, n) when requested

    @property
    def probs(self):
        return 1.0 / (1.0 + np.exp(-self.logits.data.astype(np.float64)))


class PatchECG(Module):
    def __init__(self, config):
        config.validate()
        self.config = config
        dtype = DTYPES[config.dtype]
        rng = np.random.default_rng(config.seed)
        self.encoder = build_encoder(config.encoder_config(), rng, dtype)
        self.tables = EmbeddingTables(config.n_leads, config.n_times, config.D, rng, dtype)
        self.s3 = S3(config.s3_config(), rng, dtype) if config.s3 else None
        self.transformer = TransformerEncoder(config.transformer_config(), rng, dtype)
        self.head = Head(config.D, config.n_labels, rng, dtype)

    @property
    def dtype(self):
        return DTYPES[self.config.dtype]

    def _patches(self, signal):
        values = signal.values if hasattr(signal, "values") else np.asarray(signal)
        if values.shape[0] != self.config.n_leads:
            raise ValueError(f"model expects {self.config.n_leads} leads, got {values.shape[0]}")
        return segment(values.astype(self.dtype, copy=False), self.config.P)

    def tokens(self, signal):
        """Positional token sequence (no CLS) for the surviving patches of ``signal``."""
        seq = self._patches(signal)
        keep = drop_missing(seq)
        encoded = self.encoder(Tensor(seq.stacked()[keep]))
        emb = add_positional(encoded, seq.lead_idx[keep], seq.time_idx[keep], self.tables)
        return TokenSequence(emb, seq.lead_idx[keep], seq.time_idx[keep])

    def run_tokens(self, tokens, return_attention=False, rng=None):
        x = tokens.embeddings
        if self.s3 is not None:
            x = self.s3(x)
        h0 = prepend_cls(x, self.tables.cls)
        out = self.transformer(h0, return_attention=return_attention, rng=rng)
        h, attention = out if return_attention else (out, None)
        seq = TokenSequence(h0, tokens.lead_idx, tokens.time_idx, has_cls=True)
        return Forward(self.head.logits(h), seq, attention)

    def forward(self, signal, return_attention=False, rng=None):
        return self.run_tokens(self.tokens(signal), return_attention, rng)

    def predict_proba(self, signal):
        with no_grad():
            return self.forward(signal).probs
