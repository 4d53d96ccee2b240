"""Sigmoid classification head on the CLS row and the differentiable focal loss."""
import numpy as np

from .metrics import FOCAL_EPS, FocalConfig
from .nn import Linear, Module
from .tensor import Tensor, clip, log, sigmoid


class Head(Module):
    """``sigmoid(H[0] @ W + b)`` with ``W`` of shape (E, R)."""

    def __init__(self, E, R, rng, dtype=np.float32):
        self.fc = Linear(E, R, rng, dtype)

    def logits(self, h):
        if h.shape[0] < 1:
            raise ValueError("empty encoder output")
        return self.fc(h[0])

    def forward(self, h):
        return sigmoid(self.logits(h))


def focal_loss_tensor(probs, labels, config=FocalConfig()):
    """Differentiable focal loss for one record (mean over labels)."""
    y = np.asarray(labels, dtype=probs.dtype)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    p = clip(probs, FOCAL_EPS, 1.0 - FOCAL_EPS)
    p_t = p * y + (1.0 - p) * (1.0 - y)
    a_t = np.where(y == 1, config.alpha, 1.0 - config.alpha).astype(probs.dtype)
    terms = (1.0 - p_t) ** config.gamma * log(p_t) * (-a_t)
    return terms.mean()
