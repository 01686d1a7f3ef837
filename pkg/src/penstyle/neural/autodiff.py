"""Minimal reverse-mode autodiff over 2-D float64 tensors.

Only the operations this model family needs are implemented. Graphs are
built eagerly; backward(loss) topologically sorts the recorded graph
(iteratively, so deep recurrent chains are fine), zeroes the gradients of
every reachable node, then accumulates. Calling backward twice on the same
graph therefore yields identical gradients.

Sequence data uses a step-major row layout: a (T, B, F) sequence is stored
as a (T*B, F) tensor whose row t*B + b belongs to step t of sequence b.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


class Tensor:
    """A 2-D array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _check=True):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        # Leaves are validated; op outputs skip the scan so a non-finite
        # loss surfaces as a value the trainer can diagnose.
        if _check and not np.isfinite(arr).all():
            raise ValueError("tensor data must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a 1x1 tensor")
        return float(self.data[0, 0])

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        tag = self.name or "tensor"
        return f"<{tag} {self.data.shape[0]}x{self.data.shape[1]}>"


def _node(data, parents, backward_fn) -> Tensor:
    """Internal: build a graph node if any parent participates in grads."""
    track = any(p.requires_grad or p._parents for p in parents)
    out = Tensor(data, requires_grad=False, _check=False)
    if track:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Accumulate dloss/dnode into .grad for every node reachable from loss."""
    if loss.data.shape != (1, 1):
        raise ValueError("backward requires a scalar (1x1) loss tensor")
    # Iterative post-order topological sort.
    topo, visited, stack = [], set(), [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    for node in topo:
        node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _node(a.data @ b.data, (a, b), bw)


def _reduce_to(g, shape):
    """Sum a gradient down to a broadcast operand's shape."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(_reduce_to(g, a.data.shape))
        b._accumulate(_reduce_to(g, b.data.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(_reduce_to(g, a.data.shape))
        b._accumulate(_reduce_to(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(_reduce_to(g * b.data, a.data.shape))
        b._accumulate(_reduce_to(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), bw)


def scale(a: Tensor, k: float) -> Tensor:
    def bw(g):
        a._accumulate(g * k)

    return _node(a.data * k, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bw(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), bw)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    na = a.data.shape[1]

    def bw(g):
        a._accumulate(g[:, :na])
        b._accumulate(g[:, na:])

    return _node(np.concatenate([a.data, b.data], axis=1), (a, b), bw)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    na = a.data.shape[0]

    def bw(g):
        a._accumulate(g[:na])
        b._accumulate(g[na:])

    return _node(np.concatenate([a.data, b.data], axis=0), (a, b), bw)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        a._accumulate(full)

    return _node(a.data[start:stop].copy(), (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    def bw(g):
        a._accumulate(np.full_like(a.data, g[0, 0]))

    return _node(a.data.sum().reshape(1, 1), (a,), bw)


def embed_rows(table: Tensor, indices) -> Tensor:
    """Row gather: out[i] = table[indices[i]]."""
    idx = np.asarray(indices, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table._accumulate(full)

    return _node(table.data[idx], (table,), bw)


def embed_pairs(table: Tensor, first_idx, second_idx, offset: int) -> Tensor:
    """Two-block gather: out[i] = table[first[i]] + table[offset + second[i]].

    This is exactly a one-hot pair times the table, done as lookups.
    """
    fi = np.asarray(first_idx, dtype=np.int64)
    si = np.asarray(second_idx, dtype=np.int64) + offset

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, fi, g)
        np.add.at(full, si, g)
        table._accumulate(full)

    return _node(table.data[fi] + table.data[si], (table,), bw)


def softmax_nll_sum(logits: Tensor, targets, mask=None) -> Tensor:
    """Masked sum of row-wise softmax NLL; returns a scalar tensor.

    targets is an (N,) int array; mask an optional (N,) 0/1 float array.
    A target must be a valid column index even on masked rows (use 0).
    """
    tgt = np.asarray(targets, dtype=np.int64)
    if tgt.min(initial=0) < 0 or tgt.max(initial=0) >= logits.data.shape[1]:
        raise ValueError("target index out of range")
    losses, probs = kernels.softmax_nll_forward(logits.data, tgt)
    m = np.ones_like(losses) if mask is None else np.asarray(mask, dtype=np.float64)
    total = float((losses * m).sum())

    def bw(g):
        gl = g[0, 0] * m
        logits._accumulate(kernels.softmax_nll_backward(gl, probs, tgt))

    return _node(np.array([[total]]), (logits,), bw)


def gru_layer(inputs: Tensor, cell, T: int, B: int, mask=None) -> Tensor:
    """One GRU layer over a step-major (T*B, I) sequence tensor.

    cell is a GruCellParams; mask an optional (T, B) float array freezing
    finished sequences. Output is the (T*B, H) hidden sequence.
    """
    params = (cell.wz, cell.uz, cell.bz, cell.wr, cell.ur, cell.br, cell.wh, cell.uh, cell.bh)
    data = [p.data for p in params]
    xs = inputs.data.reshape(T, B, inputs.data.shape[1])
    h0 = np.zeros((B, cell.hidden_size))
    hs, cache = kernels.gru_layer_forward(xs, h0, mask, *data)

    def bw(g):
        douts = g.reshape(T, B, cell.hidden_size)
        out = kernels.gru_layer_backward(douts, xs, h0, hs, mask, cache, *data)
        inputs._accumulate(out[0].reshape(T * B, -1))
        for p, dg in zip(params, out[2:]):
            p._accumulate(dg)

    return _node(hs.reshape(T * B, cell.hidden_size), (inputs, *params), bw)


def gru_step_op(x: Tensor, h: Tensor, cell) -> Tensor:
    """Single differentiable GRU step (batch rows in x and h)."""
    params = (cell.wz, cell.uz, cell.bz, cell.wr, cell.ur, cell.br, cell.wh, cell.uh, cell.bh)
    data = [p.data for p in params]
    h_next, z, r, c, rh = kernels.gru_cell_forward(x.data, h.data, *data)

    def bw(g):
        out = kernels.gru_cell_backward(
            g, x.data, h.data, z, r, c, rh,
            cell.wz.data, cell.uz.data, cell.wr.data, cell.ur.data,
            cell.wh.data, cell.uh.data,
        )
        x._accumulate(out[0])
        h._accumulate(out[1])
        for p, dg in zip(params, out[2:]):
            p._accumulate(dg)

    return _node(h_next, (x, h, *params), bw)
