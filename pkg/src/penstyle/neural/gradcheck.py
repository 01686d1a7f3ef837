"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def numerical_grad(f, array, step=1e-4) -> np.ndarray:
    """Central-difference gradient of scalar f() w.r.t. array (in place).

    f must recompute the forward pass from the current array contents.
    """
    g = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + step
        f_plus = f()
        array[idx] = orig - step
        f_minus = f()
        array[idx] = orig
        g[idx] = (f_plus - f_minus) / (2.0 * step)
    return g


def rel_error(a, b) -> float:
    """Max-norm relative error with a unit floor, robust near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    return float(np.abs(a - b).max()) / denom


def gradcheck(build_loss, tensors, step=1e-4) -> float:
    """Worst relative error between tape and finite-difference gradients.

    build_loss() must rebuild the scalar loss tensor from the tensors'
    current data (which is perturbed in place during the check).
    """
    loss = build_loss()
    ad.backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]
    worst = 0.0
    for t, a in zip(tensors, analytic):
        num = numerical_grad(lambda: build_loss().item(), t.data, step)
        worst = max(worst, rel_error(a, num))
    return worst
