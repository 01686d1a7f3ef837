# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels: fused GRU gate math and softmax/NLL rows.

Same contracts and loop structure as kernels.reference (input projections
hoisted out of the recurrent loop); matrix products stay on BLAS via
np.dot, the element-wise gate math runs as fused nogil loops instead of
chains of numpy temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

NAME = "cython"


cdef inline double _sigmoid(double v) noexcept nogil:
    return 1.0 / (1.0 + exp(-v))


cdef void _fwd_gates(const double[:, ::1] xz, const double[:, ::1] hz,
                     const double[:, ::1] xr, const double[:, ::1] hr,
                     const double[:, ::1] h,
                     double[:, ::1] z, double[:, ::1] r, double[:, ::1] rh) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(xz.shape[0]):
        for j in range(xz.shape[1]):
            z[i, j] = _sigmoid(xz[i, j] + hz[i, j])
            r[i, j] = _sigmoid(xr[i, j] + hr[i, j])
            rh[i, j] = r[i, j] * h[i, j]


cdef void _fwd_mix(const double[:, ::1] xh, const double[:, ::1] hh,
                   const double[:, ::1] z, const double[:, ::1] h,
                   double[:, ::1] c, double[:, ::1] h_next) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(xh.shape[0]):
        for j in range(xh.shape[1]):
            c[i, j] = tanh(xh[i, j] + hh[i, j])
            h_next[i, j] = (1.0 - z[i, j]) * h[i, j] + z[i, j] * c[i, j]


cdef void _mask_lerp(double[:, ::1] h_new, const double[:, ::1] h_prev,
                     const double[::1] m) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(h_new.shape[0]):
        for j in range(h_new.shape[1]):
            h_new[i, j] = m[i] * h_new[i, j] + (1.0 - m[i]) * h_prev[i, j]


cdef void _bwd_gates(const double[:, ::1] d, const double[:, ::1] h,
                     const double[:, ::1] z, const double[:, ::1] c,
                     double[:, ::1] dah, double[:, ::1] daz,
                     double[:, ::1] dh) noexcept nogil:
    # dh receives the direct (1 - z) path; reset-gate and hidden-matmul
    # contributions are added by the caller.
    cdef Py_ssize_t i, j
    cdef double dc, dz
    for i in range(d.shape[0]):
        for j in range(d.shape[1]):
            dc = d[i, j] * z[i, j]
            dz = d[i, j] * (c[i, j] - h[i, j])
            dah[i, j] = dc * (1.0 - c[i, j] * c[i, j])
            daz[i, j] = dz * z[i, j] * (1.0 - z[i, j])
            dh[i, j] = d[i, j] * (1.0 - z[i, j])


cdef void _bwd_reset(const double[:, ::1] drh, const double[:, ::1] r,
                     const double[:, ::1] h,
                     double[:, ::1] dar, double[:, ::1] dh) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double dr
    for i in range(drh.shape[0]):
        for j in range(drh.shape[1]):
            dh[i, j] += drh[i, j] * r[i, j]
            dr = drh[i, j] * h[i, j]
            dar[i, j] = dr * r[i, j] * (1.0 - r[i, j])


def gru_cell_forward(x, h, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """One GRU step over a batch. Returns (h_next, z, r, c, rh)."""
    x = np.ascontiguousarray(x)
    h = np.ascontiguousarray(h)
    xz = np.dot(x, wz)
    xz += bz
    xr = np.dot(x, wr)
    xr += br
    z = np.empty_like(xz)
    r = np.empty_like(xz)
    rh = np.empty_like(xz)
    _fwd_gates(xz, np.dot(h, uz), xr, np.dot(h, ur), h, z, r, rh)
    xh = np.dot(x, wh)
    xh += bh
    c = np.empty_like(xh)
    h_next = np.empty_like(xh)
    _fwd_mix(xh, np.dot(rh, uh), z, h, c, h_next)
    return h_next, z, r, c, rh


def gru_cell_backward(g, x, h, z, r, c, rh, wz, uz, wr, ur, wh, uh):
    """Gradients of one GRU step given g = dL/dh_next."""
    g = np.ascontiguousarray(g)
    h = np.ascontiguousarray(h)
    z = np.ascontiguousarray(z)
    r = np.ascontiguousarray(r)
    c = np.ascontiguousarray(c)
    dah = np.empty_like(g)
    daz = np.empty_like(g)
    dh = np.empty_like(g)
    _bwd_gates(g, h, z, c, dah, daz, dh)
    drh = np.ascontiguousarray(np.dot(dah, uh.T))
    dar = np.empty_like(g)
    _bwd_reset(drh, r, h, dar, dh)
    dx = np.dot(dah, wh.T)
    dx += np.dot(daz, wz.T)
    dx += np.dot(dar, wr.T)
    dh += np.dot(daz, uz.T)
    dh += np.dot(dar, ur.T)
    dwz = np.dot(x.T, daz)
    duz = np.dot(h.T, daz)
    dbz = daz.sum(axis=0, keepdims=True)
    dwr = np.dot(x.T, dar)
    dur = np.dot(h.T, dar)
    dbr = dar.sum(axis=0, keepdims=True)
    dwh = np.dot(x.T, dah)
    duh = np.dot(rh.T, dah)
    dbh = dah.sum(axis=0, keepdims=True)
    return dx, dh, dwz, duz, dbz, dwr, dur, dbr, dwh, duh, dbh


def gru_layer_forward(xs, h0, mask, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """Run one GRU layer over a (T, B, I) sequence; see kernels.reference."""
    cdef Py_ssize_t T = xs.shape[0]
    cdef Py_ssize_t B = xs.shape[1]
    cdef Py_ssize_t H = h0.shape[1]
    flat = np.ascontiguousarray(xs).reshape(T * B, -1)
    xz = (np.dot(flat, wz) + bz).reshape(T, B, H)
    xr = (np.dot(flat, wr) + br).reshape(T, B, H)
    xh = (np.dot(flat, wh) + bh).reshape(T, B, H)
    hs = np.empty((T, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    rhs = np.empty((T, B, H))
    h = np.ascontiguousarray(h0)
    cdef Py_ssize_t t
    for t in range(T):
        z = zs[t]
        r = rs[t]
        rh = rhs[t]
        _fwd_gates(xz[t], np.dot(h, uz), xr[t], np.dot(h, ur), h, z, r, rh)
        c = cs[t]
        h_new = np.empty((B, H))
        _fwd_mix(xh[t], np.dot(rh, uh), z, h, c, h_new)
        if mask is not None:
            _mask_lerp(h_new, h, np.ascontiguousarray(mask[t]))
        hs[t] = h_new
        h = h_new
    return hs, (zs, rs, cs, rhs)


def gru_layer_backward(douts, xs, h0, hs, mask, cache, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """Backpropagate through a GRU layer run; see kernels.reference."""
    zs, rs, cs, rhs = cache
    cdef Py_ssize_t T = xs.shape[0]
    cdef Py_ssize_t B = xs.shape[1]
    cdef Py_ssize_t H = h0.shape[1]
    dazs = np.empty((T, B, H))
    dars = np.empty((T, B, H))
    dahs = np.empty((T, B, H))
    dh = np.zeros((B, H))
    h0 = np.ascontiguousarray(h0)
    cdef Py_ssize_t t
    for t in range(T - 1, -1, -1):
        d = douts[t] + dh
        h_prev = np.ascontiguousarray(hs[t - 1]) if t > 0 else h0
        if mask is not None:
            m = mask[t][:, None]
            carry = d * (1.0 - m)
            d = np.ascontiguousarray(d * m)
        else:
            carry = None
            d = np.ascontiguousarray(d)
        dah = dahs[t]
        daz = dazs[t]
        dar = dars[t]
        dh = np.empty((B, H))
        _bwd_gates(d, h_prev, np.ascontiguousarray(zs[t]), np.ascontiguousarray(cs[t]),
                   dah, daz, dh)
        drh = np.ascontiguousarray(np.dot(dah, uh.T))
        _bwd_reset(drh, np.ascontiguousarray(rs[t]), h_prev, dar, dh)
        if carry is not None:
            dh += carry
        dh += np.dot(daz, uz.T)
        dh += np.dot(dar, ur.T)
    flat_x = np.ascontiguousarray(xs).reshape(T * B, -1)
    flat_daz = dazs.reshape(T * B, H)
    flat_dar = dars.reshape(T * B, H)
    flat_dah = dahs.reshape(T * B, H)
    h_prev_all = np.concatenate([h0[None], hs[:-1]], axis=0).reshape(T * B, H)
    rh_all = np.ascontiguousarray(rhs).reshape(T * B, H)
    dxs = (np.dot(flat_daz, wz.T) + np.dot(flat_dar, wr.T)
           + np.dot(flat_dah, wh.T)).reshape(xs.shape)
    return (
        dxs, dh,
        np.dot(flat_x.T, flat_daz), np.dot(h_prev_all.T, flat_daz),
        flat_daz.sum(0, keepdims=True),
        np.dot(flat_x.T, flat_dar), np.dot(h_prev_all.T, flat_dar),
        flat_dar.sum(0, keepdims=True),
        np.dot(flat_x.T, flat_dah), np.dot(rh_all.T, flat_dah),
        flat_dah.sum(0, keepdims=True),
    )


cdef void _nll_rows(const double[:, ::1] logits, const long[::1] targets,
                    double[::1] losses, double[:, ::1] probs) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double m, s
    for i in range(logits.shape[0]):
        m = logits[i, 0]
        for j in range(1, logits.shape[1]):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(logits.shape[1]):
            probs[i, j] = exp(logits[i, j] - m)
            s += probs[i, j]
        for j in range(logits.shape[1]):
            probs[i, j] /= s
        k = targets[i]
        losses[i] = m + log(s) - logits[i, k]


def softmax_nll_forward(logits, targets):
    """Row-wise stable softmax NLL. Returns (losses, probs)."""
    logits = np.ascontiguousarray(logits)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    losses = np.empty(logits.shape[0])
    probs = np.empty_like(logits)
    _nll_rows(logits, targets, losses, probs)
    return losses, probs


cdef void _nll_grad(const double[::1] gl, const double[:, ::1] probs,
                    const long[::1] targets, double[:, ::1] d) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(probs.shape[0]):
        for j in range(probs.shape[1]):
            d[i, j] = probs[i, j] * gl[i]
        d[i, targets[i]] -= gl[i]


def softmax_nll_backward(gl, probs, targets):
    """dL/dlogits given per-row upstream gradients gl (N,)."""
    gl = np.ascontiguousarray(gl)
    probs = np.ascontiguousarray(probs)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    d = np.empty_like(probs)
    _nll_grad(gl, probs, targets, d)
    return d
