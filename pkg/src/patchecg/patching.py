"""Equidistant patch segmentation with missingness markers.

Each lead of length T is cut into ``T // P`` non-overlapping windows; the
trailing ``T % P`` samples are discarded. A patch carries its samples (hidden
positions zeroed) and a marker row that is 1 where the sample was observed.
"""
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class PatchKind(IntEnum):
    COMPLETE = 0
    PARTIAL = 1
    MISSING = 2


@dataclass(frozen=True)
class Patch:
    lead_idx: int
    time_idx: int
    values: np.ndarray
    marker: np.ndarray

    @property
    def kind(self):
        return classify_patch(self)


def classify_patch(patch):
    observed = int(np.count_nonzero(patch.marker))
    if observed == patch.marker.size:
        return PatchKind.COMPLETE
    if observed == 0:
        return PatchKind.MISSING
    return PatchKind.PARTIAL


def attach_marker(patch):
    """``2 x P`` array: row 0 the (zero-filled) values, row 1 the marker."""
    if patch.values.shape != patch.marker.shape or patch.values.ndim != 1:
        raise ValueError(f"malformed patch: values {patch.values.shape}, marker {patch.marker.shape}")
    return np.stack([patch.values, patch.marker.astype(patch.values.dtype)])


@dataclass
class PatchSequence:
    """All patches of one record in lead-major, then time order."""

    lead_idx: np.ndarray  # (N,)
    time_idx: np.ndarray  # (N,)
    values: np.ndarray  # (N, P), hidden samples are 0
    marker: np.ndarray  # (N, P), 1.0 observed / 0.0 hidden
    kind: np.ndarray  # (N,) PatchKind codes
    P: int

    @property
    def N(self):
        return len(self.kind)

    @property
    def N_miss(self):
        return int(np.count_nonzero(self.kind == PatchKind.MISSING))

    def __len__(self):
        return self.N

    def __getitem__(self, k):
        return Patch(int(self.lead_idx[k]), int(self.time_idx[k]), self.values[k], self.marker[k])

    def stacked(self):
        """``(N, 2, P)`` encoder input (values row, marker row) for every patch."""
        return np.stack([self.values, self.marker], axis=1)

    def survivors(self):
        """Indices of patches that are not completely missing, in order."""
        return np.flatnonzero(self.kind != PatchKind.MISSING)

    def counts(self):
        return {k.name: int(np.count_nonzero(self.kind == k)) for k in PatchKind}


def segment(signal, P=64):
    """Cut a (possibly masked) signal into ``P``-sample patches per lead."""
    values = signal.values if hasattr(signal, "values") else np.asarray(signal)
    C, T = values.shape
    if P < 1:
        raise ValueError(f"patch size must be positive, got {P}")
    if P > T:
        raise ValueError(f"no complete patch: P={P} exceeds T={T}")
    n = T // P
    windows = values[:, :n * P].reshape(C * n, P)
    observed = np.isfinite(windows)
    patch_values = np.where(observed, windows, 0.0).astype(windows.dtype, copy=False)
    marker = observed.astype(windows.dtype)
    n_obs = observed.sum(axis=1)
    kind = np.full(C * n, PatchKind.PARTIAL, dtype=np.int8)
    kind[n_obs == P] = PatchKind.COMPLETE
    kind[n_obs == 0] = PatchKind.MISSING
    lead_idx = np.repeat(np.arange(C), n)
    time_idx = np.tile(np.arange(n), C)
    return PatchSequence(lead_idx, time_idx, patch_values, marker, kind, P)


def patch_table(seq, lead_names=None):
    """Rows ``(lead, j, kind)`` for CSV dumps."""
    rows = []
    for i, j, k in zip(seq.lead_idx, seq.time_idx, seq.kind):
        lead = lead_names[i] if lead_names is not None else int(i)
        rows.append((lead, int(j), PatchKind(k).name.capitalize()))
    return rows
