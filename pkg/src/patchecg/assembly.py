"""Token assembly: positional embeddings, missing-patch removal, S3 reordering, CLS.

Order of operations per record::

    encoded patches -> + lead/time embeddings -> drop Missing
                    -> S3 layers -> prepend CLS

Encoders are per-patch, so :class:`~patchecg.model.PatchECG` drops Missing
patches before encoding; the result is identical and cheaper.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .nn import Module, parameter
from .patching import PatchKind
from .tensor import Tensor, clip, concat, reshape, take

log = logging.getLogger(__name__)


class EmptyRecordError(ValueError):
    """Every patch of a record is completely missing."""


class EmbeddingTables(Module):
    def __init__(self, n_leads, n_times, D, rng, dtype=np.float32, scale=0.02):
        self.lead = parameter(scale * rng.standard_normal((n_leads, D)), dtype)
        self.time = parameter(scale * rng.standard_normal((n_times, D)), dtype)
        self.cls = parameter(scale * rng.standard_normal(D), dtype)


@dataclass
class TokenSequence:
    embeddings: Tensor  # (n, D); row 0 is CLS when has_cls
    lead_idx: np.ndarray
    time_idx: np.ndarray
    has_cls: bool = False

    def __len__(self):
        return self.embeddings.shape[0]


def add_positional(encoded, lead_idx, time_idx, tables):
    """Row ``k`` becomes ``encoded[k] + lead[lead_idx[k]] + time[time_idx[k]]``."""
    lead_idx = np.asarray(lead_idx, dtype=np.int64)
    time_idx = np.asarray(time_idx, dtype=np.int64)
    n_leads, n_times = tables.lead.shape[0], tables.time.shape[0]
    if lead_idx.size and (lead_idx.min() < 0 or lead_idx.max() >= n_leads):
        raise IndexError(f"lead index {int(lead_idx.max())} outside the {n_leads}-row lead table")
    if time_idx.size and (time_idx.min() < 0 or time_idx.max() >= n_times):
        raise IndexError(f"time index {int(time_idx.max())} outside the {n_times}-row time table")
    return encoded + take(tables.lead, lead_idx) + take(tables.time, time_idx)


def drop_missing(seq):
    """Indices of patches to keep (everything but ``MISSING``), order preserved."""
    keep = np.flatnonzero(np.asarray(seq.kind) != PatchKind.MISSING)
    if keep.size == 0:
        raise EmptyRecordError("empty record under this layout: every patch is missing")
    return keep


@dataclass
class S3Config:
    layers: int = 3
    initial_segments: int = 4
    multiplier: int = 2
    init_weight: float = 0.1

    def segments_at(self, layer):
        return self.initial_segments * self.multiplier ** layer


def segment_bounds(n, s):
    """Start/stop of ``s`` contiguous near-equal segments; the first ``n % s`` are longer."""
    base, extra = divmod(n, s)
    sizes = [base + (1 if k < extra else 0) for k in range(s)]
    stops = np.cumsum(sizes)
    return [(int(stop - size), int(stop)) for size, stop in zip(sizes, stops)]


def segment_order(scores):
    """Segment indices by descending score; ties keep their original order."""
    scores = np.asarray(scores)
    return sorted(range(len(scores)), key=lambda k: (-scores[k], k))


def s3_permutation(n, scores):
    bounds = segment_bounds(n, len(scores))
    return np.concatenate([np.arange(*bounds[k]) for k in segment_order(scores)])


class S3Layer(Module):
    """Segment, shuffle by learned scores, stitch, and mix with the input.

    ``out = w * tokens[perm] + (1 - w) * tokens``. The permutation is a hard
    sort of ``scores``, so gradient reaches the tokens and ``w`` only.
    """

    def __init__(self, n_segments, rng, dtype=np.float32, init_weight=0.1):
        self.n_segments = n_segments
        self.scores = parameter(rng.standard_normal(n_segments), dtype)
        self.weight = parameter(np.array([init_weight]), dtype)

    def forward(self, tokens):
        return s3_shuffle(tokens, self)


def s3_shuffle(tokens, layer):
    n = tokens.shape[0]
    if n < layer.n_segments:
        log.debug("S3 layer with %d segments skipped for %d tokens", layer.n_segments, n)
        return tokens
    perm = s3_permutation(n, layer.scores.data)
    w = clip(layer.weight, 0.0, 1.0)
    return w * take(tokens, perm) + (1.0 - w) * tokens


class S3(Module):
    def __init__(self, config, rng, dtype=np.float32):
        self.config = config
        self.layers = [S3Layer(config.segments_at(k), rng, dtype, config.init_weight)
                       for k in range(config.layers)]

    def forward(self, tokens):
        for layer in self.layers:
            tokens = layer(tokens)
        return tokens


def prepend_cls(tokens, cls):
    """``[cls; tokens]`` with ``cls`` as row 0."""
    if tokens.shape[0] == 0:
        raise EmptyRecordError("cannot prepend CLS to an empty token sequence")
    return concat([reshape(cls, (1, cls.shape[0])), tokens], axis=0)
