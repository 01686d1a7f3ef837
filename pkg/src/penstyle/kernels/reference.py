"""Pure-numpy implementations of the recurrent hot-path kernels.

This is the fallback backend; the compiled Cython module in _ckernels.pyx
implements the same contracts with fused element-wise loops. Both share
the GRU convention used throughout the package:

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    c = tanh(x Wh + (r * h) Uh + bh)        (reset gates the hidden state
    h' = (1 - z) * h + z * c                 before the candidate matmul)

Sequence kernels take step-major (T, B, ...) arrays and hoist the
input-side projections out of the recurrent loop into single large
matmuls; only the hidden-side products stay per step. An optional (T, B)
mask freezes finished sequences: where mask is 0 the hidden state carries
over unchanged, so the step-T output row holds every sequence's own final
hidden state.
"""

import numpy as np

NAME = "python"


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def gru_cell_forward(x, h, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """One GRU step over a batch. Returns (h_next, z, r, c, rh)."""
    z = _sigmoid(x @ wz + h @ uz + bz)
    r = _sigmoid(x @ wr + h @ ur + br)
    rh = r * h
    c = np.tanh(x @ wh + rh @ uh + bh)
    h_next = (1.0 - z) * h + z * c
    return h_next, z, r, c, rh


def gru_cell_backward(g, x, h, z, r, c, rh, wz, uz, wr, ur, wh, uh):
    """Gradients of one GRU step given g = dL/dh_next.

    Returns (dx, dh, dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh).
    """
    dc = g * z
    dz = g * (c - h)
    dh = g * (1.0 - z)
    dah = dc * (1.0 - c * c)
    daz = dz * z * (1.0 - z)
    drh = dah @ uh.T
    dh += drh * r
    dr = drh * h
    dar = dr * r * (1.0 - r)
    dx = dah @ wh.T + daz @ wz.T + dar @ wr.T
    dh += daz @ uz.T + dar @ ur.T
    dwz = x.T @ daz
    duz = h.T @ daz
    dbz = daz.sum(axis=0, keepdims=True)
    dwr = x.T @ dar
    dur = h.T @ dar
    dbr = dar.sum(axis=0, keepdims=True)
    dwh = x.T @ dah
    duh = rh.T @ dah
    dbh = dah.sum(axis=0, keepdims=True)
    return dx, dh, dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh


def gru_layer_forward(xs, h0, mask, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """Run one GRU layer over a (T, B, I) input sequence.

    Returns (hs, cache) where hs is the (T, B, H) layer output and cache
    holds per-step gate activations for the backward pass.
    """
    T, B, _ = xs.shape
    H = h0.shape[1]
    flat = xs.reshape(T * B, -1)
    xz = (flat @ wz + bz).reshape(T, B, H)
    xr = (flat @ wr + br).reshape(T, B, H)
    xh = (flat @ wh + bh).reshape(T, B, H)
    hs = np.empty((T, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    rhs = np.empty((T, B, H))
    h = h0
    for t in range(T):
        z = _sigmoid(xz[t] + h @ uz)
        r = _sigmoid(xr[t] + h @ ur)
        rh = r * h
        c = np.tanh(xh[t] + rh @ uh)
        h_new = (1.0 - z) * h + z * c
        if mask is not None:
            m = mask[t][:, None]
            h_new = m * h_new + (1.0 - m) * h
        hs[t] = h_new
        zs[t] = z
        rs[t] = r
        cs[t] = c
        rhs[t] = rh
        h = h_new
    return hs, (zs, rs, cs, rhs)


def gru_layer_backward(douts, xs, h0, hs, mask, cache, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """Backpropagate through a GRU layer run.

    douts is (T, B, H) gradient w.r.t. the layer outputs hs. Returns
    (dxs, dh0, dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh).
    """
    zs, rs, cs, rhs = cache
    T, B, _ = xs.shape
    H = h0.shape[1]
    dazs = np.empty((T, B, H))
    dars = np.empty((T, B, H))
    dahs = np.empty((T, B, H))
    dh = np.zeros_like(h0)
    for t in range(T - 1, -1, -1):
        d = douts[t] + dh
        h_prev = hs[t - 1] if t > 0 else h0
        if mask is not None:
            m = mask[t][:, None]
            dh = d * (1.0 - m)
            d = d * m
        else:
            dh = np.zeros_like(dh)
        z, r, c, rh = zs[t], rs[t], cs[t], rhs[t]
        dc = d * z
        dah = dc * (1.0 - c * c)
        daz = (d * (c - h_prev)) * z * (1.0 - z)
        drh = dah @ uh.T
        dar = (drh * h_prev) * r * (1.0 - r)
        dh += d * (1.0 - z) + drh * r + daz @ uz.T + dar @ ur.T
        dazs[t] = daz
        dars[t] = dar
        dahs[t] = dah
    # Batched weight/input gradients: one large matmul per operand.
    flat_x = xs.reshape(T * B, -1)
    flat_daz = dazs.reshape(T * B, H)
    flat_dar = dars.reshape(T * B, H)
    flat_dah = dahs.reshape(T * B, H)
    h_prev_all = np.concatenate([h0[None], hs[:-1]], axis=0).reshape(T * B, H)
    rh_all = rhs.reshape(T * B, H)
    dxs = (flat_daz @ wz.T + flat_dar @ wr.T + flat_dah @ wh.T).reshape(xs.shape)
    return (
        dxs, dh,
        flat_x.T @ flat_daz, h_prev_all.T @ flat_daz, flat_daz.sum(0, keepdims=True),
        flat_x.T @ flat_dar, h_prev_all.T @ flat_dar, flat_dar.sum(0, keepdims=True),
        flat_x.T @ flat_dah, rh_all.T @ flat_dah, flat_dah.sum(0, keepdims=True),
    )


def softmax_nll_forward(logits, targets):
    """Row-wise stable softmax negative log likelihood.

    Returns (losses, probs): losses is (N,), probs is the cached (N, K)
    softmax used by the backward pass.
    """
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    probs = e / s
    lse = m[:, 0] + np.log(s[:, 0])
    losses = lse - logits[np.arange(logits.shape[0]), targets]
    return losses, probs


def softmax_nll_backward(gl, probs, targets):
    """dL/dlogits given per-row upstream gradients gl (N,)."""
    d = probs * gl[:, None]
    d[np.arange(probs.shape[0]), targets] -= gl
    return d
