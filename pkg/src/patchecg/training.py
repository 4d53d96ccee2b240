"""Masked training, layout evaluation and key-patch explanation."""
import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import EmptyRecordError
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint
from .head import focal_loss_tensor
from .layouts import MaskPolicy, apply_mask, layout_mask, random_mask, resolve_layout
from .metrics import FocalConfig, metrics_report
from .model import ModelConfig, PatchECG
from .optim import Adam
from .tensor import no_grad, sigmoid

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    P: int = 64
    batch: int = 64
    epochs: int = 30
    lr: float = 1e-3
    weight_decay: float = 1e-4
    D: int = 64
    K: int = 3
    heads: int = 8
    encoder: str = "projection"
    s3: bool = True
    s3_layers: int = 3
    s3_segments: int = 4
    s3_multiplier: int = 2
    s3_init_weight: float = 0.1
    dropout: float = 0.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    mask_policy: str = "random"  # "random", "none" or a layout name
    p_full: float = 0.15
    mask_lengths: tuple = (0.25, 0.5)
    freeze_masks: bool = False
    seed: int = 0
    split: tuple = (0.8, 0.1, 0.1)
    folds: int = 0
    fold: int = 0

    def validate(self):
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split fractions must be three non-negative numbers summing to 1, got {self.split}")
        if self.folds and not 0 <= self.fold < self.folds:
            raise ValueError(f"fold {self.fold} outside 0..{self.folds - 1}")
        if self.mask_policy not in ("random", "none"):
            resolve_layout(self.mask_policy)

    def model_config(self, n_leads, n_labels, t_max):
        return ModelConfig(n_leads=n_leads, n_labels=n_labels, P=self.P, t_max=t_max, D=self.D,
                           layers=self.K, heads=self.heads, dropout=self.dropout,
                           encoder=self.encoder, s3=self.s3, s3_layers=self.s3_layers,
                           s3_segments=self.s3_segments, s3_multiplier=self.s3_multiplier,
                           s3_init_weight=self.s3_init_weight,
                           seed=self.seed)

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        for key in ("mask_lengths", "split"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    model: PatchECG
    log: list = field(default_factory=list)  # one dict per epoch
    best_epoch: int = 0
    skipped: int = 0


# ---------------------------------------------------------------- splits


def split_indices(n, fractions=(0.8, 0.1, 0.1), seed=0, folds=0, fold=0):
    """Seeded train/val/test index split, or fold rotation when ``folds > 0``.

    With folds, fold ``fold`` is the test set and fold ``fold + 1`` the
    validation set.
    """
    order = np.random.default_rng(seed).permutation(n)
    if folds:
        parts = np.array_split(order, folds)
        test = parts[fold]
        val = parts[(fold + 1) % folds]
        train = np.concatenate([p for k, p in enumerate(parts)
                                if k not in (fold, (fold + 1) % folds)] or [np.array([], int)])
        return np.sort(train), np.sort(val), np.sort(test)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return (np.sort(order[:n_train]), np.sort(order[n_train:n_train + n_val]),
            np.sort(order[n_train + n_val:]))


# ---------------------------------------------------------------- masking


def _record_rng(seed, epoch, index):
    return np.random.default_rng([int(seed), int(epoch), int(index)])


def training_mask(config, signal, epoch, index):
    C, T = signal.values.shape
    if config.mask_policy == "none":
        return None
    if config.mask_policy == "random":
        policy = MaskPolicy(config.p_full, tuple(config.mask_lengths))
        rng = _record_rng(config.seed, 0 if config.freeze_masks else epoch + 1, index)
        return random_mask(rng, C, T, policy)
    return layout_mask(resolve_layout(config.mask_policy), C, T, signal.lead_names)


def _masked(signal, mask):
    return signal if mask is None else apply_mask(signal, mask)


# ---------------------------------------------------------------- training


def _snapshot(model, config, dataset, extra=None):
    snap = {
        "model": model.config.to_dict(),
        "train": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "fs": dataset.fs,
        "leads": list(dataset.leads),
        "vocab": list(dataset.vocab),
    }
    snap.update(extra or {})
    return snap


def _state_copy(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def validation_scores(model, dataset, config):
    """Scores on ``dataset`` under deterministic masks drawn by the training policy."""
    scores, labels = [], []
    with no_grad():
        for i, rec in enumerate(dataset.records):
            mask = training_mask(config, rec.signal, -1, i)
            try:
                scores.append(model(_masked(rec.signal, mask)).probs)
            except EmptyRecordError:
                continue
            labels.append(rec.labels)
    return np.array(scores), np.array(labels)


def fit(train_set, val_set, config, progress=None):
    """Train on ``train_set``; pick the epoch with the best validation macro-AUROC."""
    config.validate()
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    t_max = train_set.records[0].signal.n_samples
    model = PatchECG(config.model_config(len(train_set.leads), len(train_set.vocab), t_max))
    params = model.parameters()
    opt = Adam(params, lr=config.lr, weight_decay=config.weight_decay)
    focal = FocalConfig(config.focal_alpha, config.focal_gamma)
    order_rng = np.random.default_rng([config.seed, 7])
    drop_rng = np.random.default_rng([config.seed, 11]) if config.dropout else None

    best_state = _state_copy(model)
    best_auc, best_epoch = -np.inf, 0
    history, skipped = [], 0
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), config.batch):
            opt.zero_grad()
            used = 0
            for idx in order[start:start + config.batch]:
                rec = train_set.records[idx]
                signal = _masked(rec.signal, training_mask(config, rec.signal, epoch, idx))
                try:
                    out = model(signal, rng=drop_rng)
                except EmptyRecordError:
                    skipped += 1
                    continue
                loss = focal_loss_tensor(sigmoid(out.logits), rec.labels, focal)
                loss.backward()
                losses.append(float(loss.data))
                used += 1
            if used == 0:
                continue
            for p in params:
                if p.grad is not None:
                    p.grad *= 1.0 / used
            opt.step()
        entry = {"epoch": epoch + 1, "train_loss": float(np.mean(losses)) if losses else float("nan")}
        val_auc = None
        if val_set is not None and len(val_set):
            s, y = validation_scores(model, val_set, config)
            val_auc = metrics_report(s, y, val_set.vocab).macro_auroc if len(s) else None
        entry["val_macro_auroc"] = val_auc
        history.append(entry)
        if progress:
            progress(entry)
        log.info("epoch %d loss %.5f val macro AUROC %s", entry["epoch"], entry["train_loss"], val_auc)
        score = val_auc if val_auc is not None else -np.inf
        if val_auc is None or score > best_auc:
            best_auc, best_epoch = score, epoch + 1
            best_state = _state_copy(model)
    if skipped:
        log.warning("skipped %d record passes with no surviving patches", skipped)
    model.load_state_dict(best_state)
    snap = _snapshot(model, config, train_set, {"best_epoch": best_epoch})
    ckpt = Checkpoint(snap, {name: p.data.astype(np.float32) for name, p in model.named_parameters()})
    return TrainResult(ckpt, model, history, best_epoch, skipped)


def train(dataset, config, progress=None):
    """Split ``dataset`` per ``config`` and run :func:`fit` on the train/val parts."""
    config.validate()
    tr, va, _ = split_indices(len(dataset), config.split, config.seed, config.folds, config.fold)
    return fit(dataset.subset(tr), dataset.subset(va), config, progress)


def write_log_csv(history, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_macro_auroc"])
        for e in history:
            auc = "" if e["val_macro_auroc"] is None else repr(e["val_macro_auroc"])
            writer.writerow([e["epoch"], repr(e["train_loss"]), auc])


# ---------------------------------------------------------------- models from checkpoints


def model_from_checkpoint(checkpoint):
    if "model" not in checkpoint.config:
        raise CheckpointError("checkpoint config lacks a model section")
    cfg = ModelConfig.from_dict(checkpoint.config["model"])
    model = PatchECG(cfg)
    try:
        model.load_state_dict(checkpoint.tensors)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"tensor table does not match the model: {exc}") from None
    return model


def load_model(path, expected=None):
    ckpt = load_checkpoint(path, expected)
    return model_from_checkpoint(ckpt), ckpt


def _as_model(model_or_ckpt):
    if isinstance(model_or_ckpt, PatchECG):
        return model_or_ckpt
    if isinstance(model_or_ckpt, Checkpoint):
        return model_from_checkpoint(model_or_ckpt)
    return load_model(model_or_ckpt)[0]


# ---------------------------------------------------------------- evaluation


def _workers():
    try:
        return max(1, int(os.environ.get("PATCHECG_THREADS", "1")))
    except ValueError:
        return 1


def predict_records(model, records, layout=None):
    """Probabilities per record (``None`` where no patch survives the layout)."""
    spec = resolve_layout(layout) if layout is not None else None

    def one(rec):
        sig = rec.signal
        if spec is not None:
            sig = apply_mask(sig, layout_mask(spec, sig.n_leads, sig.n_samples, sig.lead_names))
        with no_grad():
            try:
                return model(sig).probs
            except EmptyRecordError:
                return None

    workers = _workers()
    if workers == 1:
        return [one(r) for r in records]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, records))


def evaluate(dataset, model, layout="12x1", threshold=0.5):
    """MetricsReport for ``dataset`` with every record masked by ``layout``."""
    model = _as_model(model)
    spec = resolve_layout(layout)
    preds = predict_records(model, dataset.records, spec)
    keep = [i for i, p in enumerate(preds) if p is not None]
    scores = np.array([preds[i] for i in keep])
    labels = np.array([dataset.records[i].labels for i in keep])
    extra = {"layout": spec.name, "n_records": len(keep),
             "n_skipped": len(preds) - len(keep)}
    if not keep:
        raise EmptyRecordError(f"no record has a surviving patch under layout {spec.name}")
    return metrics_report(scores, labels, dataset.vocab, threshold, extra)


# ---------------------------------------------------------------- explanation


def key_patches(model, signal, layout="12x1", top_k=3, fs=None):
    """Patches that the CLS token attends to most in the last layer.

    Returns ``(lead_name, (t_start, t_stop), weight)`` tuples sorted by
    weight, where weights are the head-averaged CLS attention renormalized
    over all surviving patches. S3 mixes rows but keeps row positions, so a
    row is attributed to the patch at that position.
    """
    model = _as_model(model)
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    spec = resolve_layout(layout)
    masked = apply_mask(signal, layout_mask(spec, signal.n_leads, signal.n_samples, signal.lead_names))
    fs = fs or signal.fs
    with no_grad():
        out = model(masked, return_attention=True)
    if out.attention.shape[0] == 0:
        raise ValueError("model has no transformer layer to explain")
    cls_row = out.attention[-1][:, 0, 1:].astype(np.float64).mean(axis=0)
    weights = cls_row / cls_row.sum()
    order = sorted(range(len(weights)), key=lambda k: (-weights[k], k))[:top_k]
    P = model.config.P
    result = []
    for k in order:
        i, j = int(out.tokens.lead_idx[k]), int(out.tokens.time_idx[k])
        result.append((signal.lead_names[i], (j * P / fs, (j + 1) * P / fs), float(weights[k])))
    return result
