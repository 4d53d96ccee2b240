"""Parameter containers shared by the model components."""
import numpy as np

from .tensor import Tensor, layer_norm


def parameter(array, dtype):
    return Tensor(np.asarray(array, dtype=dtype), requires_grad=True)


def uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape), dtype)


class Module:
    """Base class that discovers parameters from instance attributes.

    Attribute order defines parameter order, so names and optimizer slots
    are stable across runs.
    """

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{full}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """``y = x @ weight + bias`` with ``weight`` stored as (in, out)."""

    def __init__(self, n_in, n_out, rng, dtype=np.float32, bias=True):
        self.weight = uniform_init(rng, (n_in, n_out), n_in, dtype)
        self.bias = uniform_init(rng, (n_out,), n_in, dtype) if bias else None

    def forward(self, x):
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32, eps=1e-5):
        self.gain = parameter(np.ones(dim), dtype)
        self.bias = parameter(np.zeros(dim), dtype)
        self.eps = eps

    def forward(self, x):
        return layer_norm(x, self.gain, self.bias, axis=-1, eps=self.eps)
