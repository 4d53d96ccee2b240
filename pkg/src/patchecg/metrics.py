"""Multi-label evaluation: focal loss, AUROC and thresholded confusion metrics."""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

FOCAL_EPS = 1e-7


@dataclass(frozen=True)
class FocalConfig:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")


def _check_binary(y):
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.float64)


def focal_loss(probs, labels, config=FocalConfig()):
    """Mean over labels, then over samples, of ``-a_t (1 - p_t)^gamma log p_t``."""
    y = _check_binary(labels)
    p = np.clip(np.asarray(probs, dtype=np.float64), FOCAL_EPS, 1.0 - FOCAL_EPS)
    p_t = y * p + (1.0 - y) * (1.0 - p)
    a_t = np.where(y == 1, config.alpha, 1.0 - config.alpha)
    terms = -a_t * (1.0 - p_t) ** config.gamma * np.log(p_t)
    return float(np.atleast_2d(terms).mean(axis=-1).mean())


def auroc(scores, labels):
    """Mann-Whitney AUROC with ties counted as one half.

    Returns ``None`` when ``labels`` contain a single class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_metrics(scores, labels, threshold=0.5):
    """Accuracy, precision, recall, specificity and F1 at ``threshold``.

    A metric whose denominator is zero is reported as 0 and listed under
    ``"undefined"``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    y = _check_binary(labels).astype(bool)
    pred = np.asarray(scores) >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    specificity = ratio(tn, tn + fp, "specificity")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    accuracy = ratio(tp + tn, tp + tn + fp + fn, "accuracy")
    return {"accuracy": accuracy, "precision": precision, "recall": recall,
            "specificity": specificity, "f1": f1,
            "tp": tp, "fp": fp, "tn": tn, "fn": fn, "undefined": undefined}


@dataclass
class MetricsReport:
    per_label: dict
    macro_auroc: float
    threshold: float = 0.5
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"per_label": self.per_label, "macro_auroc": self.macro_auroc,
               "threshold": self.threshold}
        out.update(self.extra)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def metrics_report(scores, labels, vocab, threshold=0.5, extra=None):
    """Per-label AUROC and confusion metrics plus the macro-average AUROC.

    Labels with a single class present get ``auroc = None`` and do not enter
    the macro average.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    per_label = {}
    values = []
    for r, name in enumerate(vocab):
        a = auroc(scores[:, r], labels[:, r])
        entry = {"auroc": a}
        if a is None:
            entry["auroc_absent_reason"] = "single class in labels"
        else:
            values.append(a)
        entry.update(confusion_metrics(scores[:, r], labels[:, r], threshold))
        per_label[name] = entry
    macro = float(np.mean(values)) if values else None
    return MetricsReport(per_label, macro, threshold, dict(extra or {}))
