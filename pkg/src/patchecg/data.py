"""Synthetic multi-label ECG records and the on-disk dataset format.

A dataset directory holds ``manifest.json`` plus one CSV per record (T rows,
one column per lead, header row of lead names, hidden samples written as
``nan``). Values are stored as float32.
"""
import json
import os
from dataclasses import dataclass, field

import numpy as np

LEADS = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")
VOCAB = ("NORM", "AF", "WIDE")
MANIFEST = "manifest.json"
FORMAT_VERSION = 1

# Per-lead projection of the cardiac dipole used to scale every bump of a beat.
_LEAD_GAIN = np.array([0.6, 1.0, 0.5, -0.8, 0.3, 0.7, -0.5, 0.3, 0.7, 1.1, 1.0, 0.8])
# Fibrillatory waves are most visible in V1 and the inferior leads.
_FWAVE_GAIN = np.array([0.5, 0.9, 0.8, 0.5, 0.4, 0.8, 1.0, 0.8, 0.6, 0.5, 0.4, 0.4])


class DataFormatError(ValueError):
    """A dataset file is missing, malformed or inconsistent with its manifest."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = ""
        if path is not None:
            where = f"{path}"
            if offset is not None:
                where += f":{offset}"
            where += ": "
        super().__init__(where + message)


@dataclass
class Signal:
    values: np.ndarray  # (C, T), NaN marks hidden samples
    fs: float
    lead_names: tuple = LEADS
    record_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError(f"signal values must be a non-empty C x T matrix, got {self.values.shape}")
        self.lead_names = tuple(self.lead_names)
        if len(self.lead_names) != self.values.shape[0]:
            raise ValueError(f"{len(self.lead_names)} lead names for {self.values.shape[0]} leads")
        if self.fs <= 0:
            raise ValueError("fs must be positive")

    @property
    def n_leads(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]

    @property
    def duration(self):
        return self.n_samples / self.fs


@dataclass
class LabeledRecord:
    signal: Signal
    labels: np.ndarray  # (R,) of {0, 1}
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def record_id(self):
        return self.signal.record_id


@dataclass
class Dataset:
    records: list
    fs: float = 100.0
    leads: tuple = LEADS
    vocab: tuple = VOCAB

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def subset(self, indices):
        return Dataset([self.records[i] for i in indices], self.fs, self.leads, self.vocab)

    def label_matrix(self):
        return np.stack([r.labels for r in self.records]) if self.records else np.zeros((0, len(self.vocab)))


@dataclass
class SynthConfig:
    fs: float = 100.0
    duration_s: float = 10.0
    rr_mean: float = 0.8  # seconds
    rr_mean_spread: float = 0.12  # per-record uniform spread of the mean RR
    norm_jitter: float = 0.02  # max relative RR deviation in sinus rhythm
    af_jitter: float = 0.55  # max relative RR deviation in AF
    min_rr: float = 0.32
    p_amplitude: float = 0.15
    qrs_width: float = 0.025  # Gaussian sigma of the R bump, seconds
    wide_factor: float = 2.5
    t_amplitude: float = 0.3
    f_amplitude: float = 0.08
    f_freq: tuple = (4.0, 9.0)
    noise: float = 0.02
    wander: float = 0.05
    lead_gain_jitter: float = 0.1

    def validate(self):
        if self.fs <= 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.norm_jitter < 0 or self.af_jitter < 0:
            raise ValueError("RR jitter must be non-negative")

    @property
    def n_samples(self):
        return int(round(self.fs * self.duration_s))


def _normalize_classes(class_spec):
    if isinstance(class_spec, str):
        class_spec = [c for c in class_spec.replace("+", ",").split(",") if c]
    classes = {c.strip().upper() for c in class_spec}
    unknown = classes - set(VOCAB)
    if unknown:
        raise ValueError(f"unknown classes {sorted(unknown)}; expected a subset of {list(VOCAB)}")
    if "NORM" in classes and len(classes) > 1:
        raise ValueError("NORM cannot be combined with other classes")
    return classes or {"NORM"}


def _beat_times(rng, cfg, irregular):
    """R-peak times covering the record plus one beat of margin on each side."""
    rr_mean = cfg.rr_mean * (1.0 + rng.uniform(-cfg.rr_mean_spread, cfg.rr_mean_spread))
    jitter = cfg.af_jitter if irregular else cfg.norm_jitter
    t = -rng.uniform(0.0, rr_mean)
    times = []
    while t < cfg.duration_s + rr_mean:
        times.append(t)
        rr = rr_mean * (1.0 + jitter * rng.uniform(-1.0, 1.0))
        t += max(rr, cfg.min_rr)
    return np.array(times), rr_mean


def _bump(t, center, sigma):
    return np.exp(-0.5 * ((t[None, :] - center[:, None]) / sigma) ** 2).sum(axis=0)


def synth_record(rng_seed, class_spec=("NORM",), config=None, vocab=VOCAB, record_id=None):
    """Generate one labeled 12-lead record; deterministic given ``rng_seed``.

    ``class_spec`` is a set of class names (``{"AF", "WIDE"}`` for instance).
    Sinus beats carry a P bump ahead of each QRS; AF beats have no P wave,
    irregular RR intervals and a sinusoidal fibrillatory baseline; WIDE
    widens the QRS complex by ``wide_factor``.
    """
    cfg = config or SynthConfig()
    cfg.validate()
    classes = _normalize_classes(class_spec)
    rng = np.random.default_rng(rng_seed)
    af = "AF" in classes
    wide = "WIDE" in classes

    n = cfg.n_samples
    t = np.arange(n) / cfg.fs
    r_times, rr_mean = _beat_times(rng, cfg, irregular=af)
    qrs = cfg.qrs_width * (cfg.wide_factor if wide else 1.0)
    p_amp = 0.0 if af else cfg.p_amplitude

    # Shared beat morphology, later projected onto each lead.
    qrs_wave = (_bump(t, r_times, qrs)
                - 0.15 * _bump(t, r_times - 1.8 * qrs, 0.8 * qrs)
                - 0.25 * _bump(t, r_times + 1.8 * qrs, 0.8 * qrs))
    t_wave = cfg.t_amplitude * _bump(t, r_times + 0.28 + 2.0 * (qrs - cfg.qrs_width), 0.05)
    p_wave = p_amp * _bump(t, r_times - 0.16, 0.025) if p_amp else np.zeros(n)

    gains = _LEAD_GAIN * (1.0 + cfg.lead_gain_jitter * rng.standard_normal(len(LEADS)))
    values = gains[:, None] * (qrs_wave + t_wave + p_wave)[None, :]

    if af:
        freq = rng.uniform(*cfg.f_freq)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        fwave = cfg.f_amplitude * np.sin(2.0 * np.pi * freq * t + phase)
        values += _FWAVE_GAIN[:, None] * fwave[None, :]
    if cfg.wander:
        wf = rng.uniform(0.1, 0.4)
        values += cfg.wander * np.sin(2.0 * np.pi * wf * t + rng.uniform(0, 2 * np.pi, (len(LEADS), 1)))
    values += cfg.noise * rng.standard_normal(values.shape)

    labels = np.array([1 if (c in classes) else 0 for c in vocab], dtype=np.int8)
    if "NORM" in vocab:
        labels[list(vocab).index("NORM")] = int(not af and not wide)
    rid = record_id if record_id is not None else f"rec{rng_seed}"
    signal = Signal(values.astype(np.float32), cfg.fs, LEADS, str(rid))
    meta = {"r_times": r_times, "rr_mean": rr_mean, "p_amplitude": p_amp,
            "qrs_width": qrs, "classes": sorted(classes)}
    return LabeledRecord(signal, labels, meta)


def synth_dataset(n, seed=0, classes=VOCAB, config=None, p_af=0.5, p_wide=0.5):
    """Draw ``n`` records; AF and WIDE are independent Bernoulli conditions.

    The vocabulary is ``classes``. A record with neither condition is NORM.
    """
    cfg = config or SynthConfig()
    cfg.validate()
    vocab = tuple(_normalize_vocab(classes))
    records = []
    for i in range(n):
        ss = np.random.SeedSequence([int(seed), i])
        draw_seed, rec_seed = ss.spawn(2)
        draw = np.random.default_rng(draw_seed)
        af = "AF" in vocab and draw.random() < p_af
        wide = "WIDE" in vocab and draw.random() < p_wide
        spec = {c for c, on in (("AF", af), ("WIDE", wide)) if on} or {"NORM"}
        records.append(synth_record(rec_seed, spec, cfg, vocab, record_id=f"rec{i:05d}"))
    return Dataset(records, cfg.fs, LEADS, vocab)


def _normalize_vocab(classes):
    if isinstance(classes, str):
        classes = classes.split(",")
    vocab = [c.strip().upper() for c in classes if c.strip()]
    bad = [c for c in vocab if c not in VOCAB]
    if bad or not vocab:
        raise ValueError(f"classes must be a non-empty subset of {list(VOCAB)}, got {list(classes)}")
    return [c for c in VOCAB if c in vocab]


def detect_r_peaks(x, fs, threshold=0.5, refractory=0.25):
    """Indices of R peaks in one lead by thresholded local maxima.

    Works on the sign of the dominant deflection; NaN samples are ignored.
    """
    x = np.asarray(x, dtype=np.float64)
    x = np.where(np.isfinite(x), x, 0.0)
    x = x - np.median(x)
    if abs(x.min()) > abs(x.max()):
        x = -x
    level = threshold * x.max()
    cand = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]) & (x[1:-1] > level)) + 1
    gap = refractory * fs
    peaks = []
    for c in cand:
        if peaks and c - peaks[-1] < gap:
            if x[c] > x[peaks[-1]]:
                peaks[-1] = c
            continue
        peaks.append(c)
    return np.array(peaks, dtype=np.int64)


def rr_variability(signal, lead="II"):
    """Coefficient of variation of detected RR intervals on ``lead``."""
    idx = signal.lead_names.index(lead)
    peaks = detect_r_peaks(signal.values[idx], signal.fs)
    if len(peaks) < 3:
        return float("nan")
    rr = np.diff(peaks) / signal.fs
    return float(rr.std() / rr.mean())


# ---------------------------------------------------------------- file I/O


def save_record_csv(signal, path):
    """Write ``signal`` as T rows x C columns with a header of lead names."""
    values = np.asarray(signal.values, dtype=np.float32).T
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(signal.lead_names) + "\n")
        np.savetxt(fh, values, fmt="%.9g", delimiter=",")


def load_record_csv(path, fs=100.0, record_id=None, expected_leads=None):
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataFormatError("record file not found", path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header == [""]:
            raise DataFormatError("empty record file", path, 1)
        if expected_leads is not None and tuple(header) != tuple(expected_leads):
            raise DataFormatError(f"header {header} does not match leads {list(expected_leads)}", path, 1)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise DataFormatError(f"expected {len(header)} columns, found {len(cells)}", path, lineno)
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise DataFormatError(f"unparseable value ({exc})", path, lineno) from None
    if not rows:
        raise DataFormatError("record has no samples", path, 2)
    values = np.array(rows, dtype=np.float32).T
    rid = record_id if record_id is not None else os.path.splitext(os.path.basename(path))[0]
    return Signal(values, fs, tuple(header), rid)


def save_dataset(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    entries = []
    for rec in dataset.records:
        fname = f"{rec.record_id}.csv"
        save_record_csv(rec.signal, os.path.join(directory, fname))
        names = [v for v, on in zip(dataset.vocab, rec.labels) if on]
        entries.append({"id": rec.record_id, "file": fname, "labels": names})
    manifest = {
        "version": FORMAT_VERSION,
        "fs": dataset.fs,
        "leads": list(dataset.leads),
        "labels_vocab": list(dataset.vocab),
        "records": entries,
    }
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def load_dataset(directory):
    mpath = os.path.join(directory, MANIFEST)
    if not os.path.exists(mpath):
        raise DataFormatError("no manifest", mpath)
    with open(mpath, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON ({exc.msg})", mpath, exc.pos) from None
    for key in ("version", "fs", "leads", "labels_vocab", "records"):
        if key not in manifest:
            raise DataFormatError(f"manifest lacks field {key!r}", mpath)
    if manifest["version"] != FORMAT_VERSION:
        raise DataFormatError(f"unsupported manifest version {manifest['version']}", mpath)
    fs = float(manifest["fs"])
    leads = tuple(manifest["leads"])
    vocab = tuple(manifest["labels_vocab"])
    records = []
    for entry in manifest["records"]:
        rid = entry["id"]
        fpath = os.path.join(directory, entry["file"])
        if not os.path.exists(fpath):
            raise DataFormatError(f"record {rid}: file {entry['file']} not found", fpath)
        signal = load_record_csv(fpath, fs, rid, expected_leads=leads)
        bad = [lab for lab in entry["labels"] if lab not in vocab]
        if bad:
            raise DataFormatError(f"record {rid}: labels {bad} outside vocabulary {list(vocab)}", mpath)
        labels = np.array([1 if v in entry["labels"] else 0 for v in vocab], dtype=np.int8)
        records.append(LabeledRecord(signal, labels))
    return Dataset(records, fs, leads, vocab)
