"""Central finite-difference gradient checking."""
import numpy as np

from .tensor import Tensor, grad, no_grad


def numerical_grad(fn, tensors, step=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. each entry of ``tensors``."""
    out = []
    with no_grad():
        for t in tensors:
            g = np.zeros_like(t.data, dtype=np.float64)
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = float(fn().data)
                flat[i] = orig - step
                down = float(fn().data)
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * step)
            out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(fn, tensors, step=1e-5, floor=1e-6):
    """Return the max relative error between autodiff and finite differences.

    ``fn`` must rebuild the graph from ``tensors`` on every call and return a
    scalar :class:`Tensor`. Tensors should be float64.
    """
    for t in tensors:
        if t.dtype != np.float64:
            raise TypeError("gradient checks need float64 tensors")
    analytic = grad(fn(), tensors)
    numeric = numerical_grad(fn, tensors, step)
    return max_relative_error(analytic, numeric, floor)


__all__ = ["Tensor", "numerical_grad", "max_relative_error", "check_gradients"]
