"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam over a fixed set of named parameter tensors.

    Update (per parameter, step t):
        m = b1*m + (1-b1)*g          v = b2*v + (1-b2)*g^2
        m_hat = m / (1 - b1^t)       v_hat = v / (1 - b2^t)
        p -= lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self):
        """Apply one update from the .grad fields; missing grads are skipped."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
