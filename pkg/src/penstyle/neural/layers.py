"""GRU cells and stacks, dense heads, dropout, and weight initialization.

Weights are drawn uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start
at zero. The GRU follows the formulation where the reset gate multiplies
the hidden state before the candidate matmul, and the update gate weights
the candidate: h' = (1 - z) * h + z * c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from . import autodiff as ad
from .autodiff import Tensor


def uniform_init(rng, rows, cols, fan_in) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class GruCellParams:
    """Learnable weights of one GRU cell."""

    input_size: int
    hidden_size: int
    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor

    @classmethod
    def init(cls, input_size, hidden_size, rng) -> "GruCellParams":
        def w():
            return Tensor(uniform_init(rng, input_size, hidden_size, input_size),
                          requires_grad=True)

        def u():
            return Tensor(uniform_init(rng, hidden_size, hidden_size, hidden_size),
                          requires_grad=True)

        def b():
            return Tensor(np.zeros((1, hidden_size)), requires_grad=True)

        return cls(input_size, hidden_size,
                   wz=w(), uz=u(), bz=b(),
                   wr=w(), ur=u(), br=b(),
                   wh=w(), uh=u(), bh=b())

    def named(self, prefix):
        for field in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh"):
            yield f"{prefix}.{field}", getattr(self, field)

    def raw(self) -> tuple:
        """Parameter arrays in kernel call order."""
        return (self.wz.data, self.uz.data, self.bz.data,
                self.wr.data, self.ur.data, self.br.data,
                self.wh.data, self.uh.data, self.bh.data)


@dataclass
class GruStackParams:
    """A stack of GRU layers; layer k feeds layer k+1."""

    cells: list

    @classmethod
    def init(cls, input_size, hidden_size, n_layers, rng) -> "GruStackParams":
        cells = []
        size = input_size
        for _ in range(n_layers):
            cells.append(GruCellParams.init(size, hidden_size, rng))
            size = hidden_size
        return cls(cells)

    @property
    def hidden_size(self) -> int:
        return self.cells[-1].hidden_size

    def named(self, prefix):
        for i, cell in enumerate(self.cells):
            yield from cell.named(f"{prefix}.layer{i}")


def gru_step(cell: GruCellParams, x, h):
    """One GRU step on plain arrays; returns h_next as an array.

    x is (input_size,) or (B, input_size); h likewise for the hidden.
    Gate values stay in (0, 1), so outputs are finite for finite inputs.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if x.shape[1] != cell.input_size or h.shape[1] != cell.hidden_size:
        raise ValueError(
            f"dimension mismatch: x has {x.shape[1]} (want {cell.input_size}), "
            f"h has {h.shape[1]} (want {cell.hidden_size})"
        )
    h_next, _, _, _, _ = kernels.gru_cell_forward(x, h, *cell.raw())
    return h_next[0] if h_next.shape[0] == 1 else h_next


def softmax_nll(logits, target):
    """Stable NLL of one class under softmax(logits).

    Returns (loss, grad) where grad = softmax(logits) - onehot(target).
    """
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= target < logits.size:
        raise ValueError(f"target {target} out of range for {logits.size} classes")
    losses, probs = kernels.softmax_nll_forward(logits[None, :], np.array([target]))
    grad = probs[0].copy()
    grad[target] -= 1.0
    return float(losses[0]), grad


def run_stack(stack: GruStackParams, inputs: Tensor, T, B,
              mask=None, dropout_p=0.0, rng=None, training=False) -> Tensor:
    """Run a GRU stack over a step-major sequence tensor.

    Dropout (if any) applies between layers only, matching the usual
    stacked-RNN convention.
    """
    out = inputs
    last = len(stack.cells) - 1
    for i, cell in enumerate(stack.cells):
        out = ad.gru_layer(out, cell, T, B, mask=mask)
        if i != last and dropout_p > 0.0:
            out = dropout(out, dropout_p, rng, training)
    return out


def dropout(x: Tensor, p: float, rng, training: bool) -> Tensor:
    """Inverted dropout: zero entries w.p. p, scale survivors by 1/(1-p).

    Identity when not training or p == 0. Requires 0 <= p < 1.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must satisfy 0 <= p < 1")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return ad.mul(x, Tensor(mask))


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)
