"""Adam with decoupled weight decay."""
from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3
    weight_decay: float = 0.0

    @classmethod
    def zeros_like(cls, params, **hyper):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **hyper)

    def copy(self):
        return AdamState([m.copy() for m in self.m], [v.copy() for v in self.v], self.t,
                         self.beta1, self.beta2, self.eps, self.lr, self.weight_decay)


def adam_step(params, grads, state):
    """One bias-corrected Adam update.

    Pure: returns ``(new_params, new_state)`` and leaves the inputs intact.
    Weight decay is decoupled, i.e. ``-lr * weight_decay * param`` is added
    to the step rather than folded into the gradient.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("adam_step: params, grads and moments differ in length")
    new = state.copy()
    new.t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** new.t
    c2 = 1.0 - b2 ** new.t
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[k].shape or p.shape != state.v[k].shape:
            raise ShapeError(f"adam_step: parameter {k} has shape {p.shape}, "
                             f"gradient {g.shape}, moments {state.m[k].shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p
        out.append((p - state.lr * update).astype(p.dtype, copy=False))
        new.m[k] = m.astype(p.dtype, copy=False)
        new.v[k] = v.astype(p.dtype, copy=False)
    return out, new


class Adam:
    """Stateful wrapper that updates :class:`~patchecg.tensor.Tensor` parameters in place."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.state = AdamState.zeros_like([p.data for p in self.params], beta1=betas[0],
                                          beta2=betas[1], eps=eps, lr=lr,
                                          weight_decay=weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new_values, self.state = adam_step([p.data for p in self.params], grads, self.state)
        for p, value in zip(self.params, new_values):
            p.data = value
