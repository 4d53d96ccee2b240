"""Print-layout visibility masks and the random masking policy used in training.

A layout states, per lead, which half-open fractions of the record were
printed. ``3x4`` for instance prints four 2.5 s columns of three leads each,
so every lead is visible for one quarter of the record.
"""
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import LEADS, Signal

_LIMB = LEADS[:6]
_CHEST = LEADS[6:]
_COLUMNS_3X4 = (LEADS[0:3], LEADS[3:6], LEADS[6:9], LEADS[9:12])


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class LayoutSpec:
    name: str
    visible: dict  # lead name -> tuple of (start, stop) fractions

    def __post_init__(self):
        for lead, intervals in self.visible.items():
            prev = 0.0
            for a, b in intervals:
                if not (0.0 <= a < b <= 1.0):
                    raise LayoutError(f"{self.name}: interval ({a}, {b}) for {lead} outside [0, 1]")
                if a < prev:
                    raise LayoutError(f"{self.name}: intervals for {lead} overlap or are unsorted")
                prev = b

    def fraction(self, lead):
        return sum(b - a for a, b in self.visible.get(lead, ()))

    def with_full(self, lead, suffix):
        visible = dict(self.visible)
        visible[lead] = ((0.0, 1.0),)
        return replace(self, name=self.name + suffix, visible=visible)


def _build_catalog():
    full = ((0.0, 1.0),)
    twelve = LayoutSpec("12x1", {lead: full for lead in LEADS})
    six = LayoutSpec("6x2", {**{lead: ((0.0, 0.5),) for lead in _LIMB},
                             **{lead: ((0.5, 1.0),) for lead in _CHEST}})
    three = LayoutSpec("3x4", {lead: ((k / 4, (k + 1) / 4),)
                               for k, column in enumerate(_COLUMNS_3X4) for lead in column})
    three_ii = three.with_full("II", "+II")
    return {
        "12x1": twelve,
        "6x2": six,
        "6x2+II": six.with_full("II", "+II"),
        "3x4": three,
        "3x4+II": three_ii,
        "3x4+II+V1": three_ii.with_full("V1", "+V1"),
    }


CATALOG = _build_catalog()


def get_layout(name):
    if isinstance(name, LayoutSpec):
        return name
    if name not in CATALOG:
        raise LayoutError(f"unknown layout {name!r}; catalog: {', '.join(CATALOG)}")
    return CATALOG[name]


def load_layout(path):
    """Read a custom layout ``{"name": ..., "visible": {lead: [[a, b], ...]}}``."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        visible = {lead: tuple((float(a), float(b)) for a, b in spans)
                   for lead, spans in raw["visible"].items()}
        return LayoutSpec(str(raw["name"]), visible)
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"{path}: malformed layout ({exc})") from None


def resolve_layout(name_or_path):
    """Catalog name, or a path to a JSON layout file."""
    if isinstance(name_or_path, LayoutSpec) or name_or_path in CATALOG:
        return get_layout(name_or_path)
    if str(name_or_path).endswith(".json"):
        return load_layout(name_or_path)
    return get_layout(name_or_path)


def _frac_to_index(f, n):
    return int(math.floor(f * n + 0.5))


def layout_mask(name, C=12, T=1000, leads=LEADS):
    """Boolean ``(C, T)`` visibility mask for a named or custom layout."""
    spec = get_layout(name) if not isinstance(name, LayoutSpec) else name
    if C != len(leads):
        raise LayoutError(f"layout masks need one name per lead; got C={C} and {len(leads)} names")
    mask = np.zeros((C, T), dtype=bool)
    for i, lead in enumerate(leads):
        for a, b in spec.visible.get(lead, ()):
            mask[i, _frac_to_index(a, T):_frac_to_index(b, T)] = True
    return mask


@dataclass(frozen=True)
class MaskPolicy:
    p_full: float = 0.15
    lengths: tuple = (0.25, 0.5)  # visible window lengths as fractions of T

    def __post_init__(self):
        if not 0.0 <= self.p_full <= 1.0:
            raise ValueError(f"p_full must lie in [0, 1], got {self.p_full}")
        if not self.lengths or any(not 0.0 < f <= 1.0 for f in self.lengths):
            raise ValueError(f"window lengths must lie in (0, 1], got {self.lengths}")


def random_mask(rng, C, T, policy=MaskPolicy()):
    """One contiguous visible window per lead, drawn independently per lead.

    With probability ``p_full`` the whole lead is kept; otherwise the window
    length is ``ceil(T * f)`` for ``f`` drawn uniformly from
    ``policy.lengths`` and the start is uniform over ``[0, T - L]``.
    """
    if T < 4:
        raise ValueError(f"random masks need T >= 4, got {T}")
    lengths = [math.ceil(T * f) for f in policy.lengths]
    mask = np.zeros((C, T), dtype=bool)
    for i in range(C):
        if rng.random() < policy.p_full:
            mask[i] = True
            continue
        length = lengths[rng.integers(len(lengths))]
        start = rng.integers(0, T - length + 1)
        mask[i, start:start + length] = True
    return mask


def apply_mask(signal, mask):
    """Copy of ``signal`` with hidden positions set to NaN."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != signal.values.shape:
        raise ValueError(f"mask shape {mask.shape} does not match signal shape {signal.values.shape}")
    values = np.where(mask, signal.values, np.nan).astype(signal.values.dtype, copy=False)
    return Signal(values, signal.fs, signal.lead_names, signal.record_id)


def visible_fractions(mask):
    return np.asarray(mask).mean(axis=1)
