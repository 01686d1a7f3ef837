"""Differentiable numerical core: tensors, GRU layers, losses, Adam."""

from .autodiff import Tensor, backward
from .layers import GruCellParams, GruStackParams, dense, dropout, gru_step, run_stack, softmax_nll
from .optim import Adam

__all__ = [
    "Tensor",
    "backward",
    "GruCellParams",
    "GruStackParams",
    "dense",
    "dropout",
    "gru_step",
    "run_stack",
    "softmax_nll",
    "Adam",
]
