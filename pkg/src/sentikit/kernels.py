"""Hot numeric kernels with numba and pure-NumPy implementations.

Three kernel families live here because they dominate training time:

* the GloVe adagrad epoch (a sequential sweep over co-occurrence entries),
* the LSTM sequence forward/backward recurrences,
* max-pooling forward/backward with argmax routing.

``lstm_*`` share one source: the same function runs as plain Python/NumPy or
numba-compiled. The GloVe and pooling kernels have separate scalar-loop
(numba) and vectorized (NumPy) implementations with identical contracts; the
test suite checks the two paths against each other.

Public names (``glove_epoch``, ``lstm_forward``, ...) are bound to one path at
import time according to :mod:`sentikit.backend`.
"""

import numpy as np

from sentikit.backend import NUMBA_ENABLED, compile_kernel

# ---------------------------------------------------------------------------
# LSTM sequence kernels (single source, time-major layout)
#
# Gate packing order inside the fused (.., 4H) matrices: input i, forget f,
# output o, candidate g. Activations: sigmoid on i/f/o, tanh on g.
# c_t = i*g + f*c_{t-1};  h_t = o*tanh(c_t)
# ---------------------------------------------------------------------------


def _lstm_forward_impl(x, wx, wh, b):
    # x: (L, B, K) contiguous; wx: (K, 4H); wh: (H, 4H); b: (4H,)
    L, B, K = x.shape
    H = wh.shape[0]
    gates = np.empty((L, B, 4 * H))
    h_out = np.empty((L, B, H))
    c_out = np.empty((L, B, H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(L):
        a = np.dot(x[t], wx) + np.dot(h_prev, wh) + b
        i = 1.0 / (1.0 + np.exp(-a[:, :H]))
        f = 1.0 / (1.0 + np.exp(-a[:, H : 2 * H]))
        o = 1.0 / (1.0 + np.exp(-a[:, 2 * H : 3 * H]))
        g = np.tanh(a[:, 3 * H :])
        c = i * g + f * c_prev
        h = o * np.tanh(c)
        gates[t, :, :H] = i
        gates[t, :, H : 2 * H] = f
        gates[t, :, 2 * H : 3 * H] = o
        gates[t, :, 3 * H :] = g
        c_out[t] = c
        h_out[t] = h
        h_prev = h
        c_prev = c
    return h_out, c_out, gates


def _lstm_backward_impl(dh_out, x, wx, wh, h_out, c_out, gates):
    # dh_out: (L, B, H) upstream gradient on every hidden state.
    L, B, K = x.shape
    H = wh.shape[0]
    wxT = np.ascontiguousarray(wx.T)
    whT = np.ascontiguousarray(wh.T)
    dx = np.empty((L, B, K))
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * H)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    da = np.empty((B, 4 * H))
    zeros_c = np.zeros((B, H))
    for t in range(L - 1, -1, -1):
        dh = dh_out[t] + dh_next
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        o = gates[t, :, 2 * H : 3 * H]
        g = gates[t, :, 3 * H :]
        tanh_c = np.tanh(c_out[t])
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        if t > 0:
            c_prev = c_out[t - 1]
            h_prev = h_out[t - 1]
        else:
            c_prev = zeros_c
            h_prev = zeros_c
        da[:, :H] = (dc * g) * i * (1.0 - i)
        da[:, H : 2 * H] = (dc * c_prev) * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = do * o * (1.0 - o)
        da[:, 3 * H :] = (dc * i) * (1.0 - g * g)
        dc_next = dc * f
        dwx += np.dot(np.ascontiguousarray(x[t].T), da)
        dwh += np.dot(np.ascontiguousarray(h_prev.T), da)
        db += np.sum(da, axis=0)
        dx[t] = np.dot(da, wxT)
        dh_next = np.dot(da, whT)
    return dx, dwx, dwh, db


_lstm_forward_nb = compile_kernel(_lstm_forward_impl)
_lstm_backward_nb = compile_kernel(_lstm_backward_impl)

# ---------------------------------------------------------------------------
# GloVe adagrad epoch
#
# One pass over the co-occurrence entries in `order`, updating word vectors,
# context vectors and both bias arrays in place. `logx`/`fw` hold ln(X_ij)
# and the precomputed weighting of each entry. Accumulators start at 1 and
# collect squared gradients of the *true* objective gradient (factor 2
# included). Returns the summed weighted squared error before each update.
# ---------------------------------------------------------------------------


def _glove_epoch_loop(i_idx, j_idx, logx, fw, order, w, wc, b, bc, gw, gwc, gb, gbc, lr):
    dim = w.shape[1]
    cost = 0.0
    for n in range(order.shape[0]):
        e = order[n]
        i = i_idx[e]
        j = j_idx[e]
        dot = 0.0
        for k in range(dim):
            dot += w[i, k] * wc[j, k]
        diff = dot + b[i] + bc[j] - logx[e]
        wdiff = fw[e] * diff
        cost += wdiff * diff
        g = 2.0 * wdiff
        for k in range(dim):
            gwi = g * wc[j, k]
            gwj = g * w[i, k]
            w[i, k] -= lr * gwi / np.sqrt(gw[i, k])
            wc[j, k] -= lr * gwj / np.sqrt(gwc[j, k])
            gw[i, k] += gwi * gwi
            gwc[j, k] += gwj * gwj
        b[i] -= lr * g / np.sqrt(gb[i])
        bc[j] -= lr * g / np.sqrt(gbc[j])
        gb[i] += g * g
        gbc[j] += g * g
    return cost


def _glove_epoch_numpy(i_idx, j_idx, logx, fw, order, w, wc, b, bc, gw, gwc, gb, gbc, lr):
    cost = 0.0
    for e in order:
        i = i_idx[e]
        j = j_idx[e]
        diff = float(np.dot(w[i], wc[j]) + b[i] + bc[j] - logx[e])
        wdiff = fw[e] * diff
        cost += wdiff * diff
        g = 2.0 * wdiff
        gwi = g * wc[j]
        gwj = g * w[i]
        w[i] -= lr * gwi / np.sqrt(gw[i])
        wc[j] -= lr * gwj / np.sqrt(gwc[j])
        gw[i] += gwi * gwi
        gwc[j] += gwj * gwj
        b[i] -= lr * g / np.sqrt(gb[i])
        bc[j] -= lr * g / np.sqrt(gbc[j])
        gb[i] += g * g
        gbc[j] += g * g
    return cost


_glove_epoch_nb = compile_kernel(_glove_epoch_loop)

# ---------------------------------------------------------------------------
# Max pooling, "same" padding with -inf fill.
#
# Output position s covers input slots [s*stride - pad_left, ... + pool).
# `arg` records the winning input index per output cell (first index on
# ties); backward adds each output gradient onto exactly that index.
# ---------------------------------------------------------------------------


def pool_geometry(length, pool, stride):
    """(n_out, pad_left) so that every window overlaps >= 1 real position."""
    n_out = -(-length // stride)
    pad_total = max((n_out - 1) * stride + pool - length, 0)
    return n_out, pad_total // 2


def _maxpool_forward_loop(x, pool, stride, pad_left, n_out):
    B, L, C = x.shape
    out = np.empty((B, n_out, C))
    arg = np.empty((B, n_out, C), dtype=np.int64)
    for bi in range(B):
        for s in range(n_out):
            start = s * stride - pad_left
            for c in range(C):
                best = -np.inf
                besti = -1
                for off in range(pool):
                    p = start + off
                    if 0 <= p < L:
                        v = x[bi, p, c]
                        if v > best:
                            best = v
                            besti = p
                out[bi, s, c] = best
                arg[bi, s, c] = besti
    return out, arg


def _maxpool_backward_loop(dy, arg, length):
    B, n_out, C = dy.shape
    dx = np.zeros((B, length, C))
    for bi in range(B):
        for s in range(n_out):
            for c in range(C):
                dx[bi, arg[bi, s, c], c] += dy[bi, s, c]
    return dx


def _maxpool_forward_numpy(x, pool, stride, pad_left, n_out):
    B, L, C = x.shape
    padded = np.full((B, L + pad_left + max((n_out - 1) * stride + pool - L - pad_left, 0), C), -np.inf)
    padded[:, pad_left : pad_left + L, :] = x
    idx = np.arange(n_out)[:, None] * stride + np.arange(pool)[None, :]
    windows = padded[:, idx, :]  # (B, n_out, pool, C)
    off = windows.argmax(axis=2)  # first max on ties
    out = np.take_along_axis(windows, off[:, :, None, :], axis=2)[:, :, 0, :]
    arg = np.arange(n_out)[None, :, None] * stride + off - pad_left
    return out, arg.astype(np.int64)


def _maxpool_backward_numpy(dy, arg, length):
    B, n_out, C = dy.shape
    dx = np.zeros((B, length, C))
    bi = np.arange(B)[:, None, None]
    ci = np.arange(C)[None, None, :]
    np.add.at(dx, (bi, arg, ci), dy)
    return dx


_maxpool_forward_nb = compile_kernel(_maxpool_forward_loop)
_maxpool_backward_nb = compile_kernel(_maxpool_backward_loop)

# ---------------------------------------------------------------------------
# Backend binding
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    lstm_forward = _lstm_forward_nb
    lstm_backward = _lstm_backward_nb
    glove_epoch = _glove_epoch_nb
    maxpool_forward = _maxpool_forward_nb
    maxpool_backward = _maxpool_backward_nb
else:
    lstm_forward = _lstm_forward_impl
    lstm_backward = _lstm_backward_impl
    glove_epoch = _glove_epoch_numpy
    maxpool_forward = _maxpool_forward_numpy
    maxpool_backward = _maxpool_backward_numpy


def warmup():
    """Trigger JIT compilation of all kernels on tiny inputs (no-op on NumPy)."""
    if not NUMBA_ENABLED:
        return
    x = np.zeros((2, 1, 3))
    wx = np.zeros((3, 8))
    wh = np.zeros((2, 8))
    b = np.zeros(8)
    h, c, g = lstm_forward(x, wx, wh, b)
    lstm_backward(np.zeros_like(h), x, wx, wh, h, c, g)
    one = np.ones(1)
    glove_epoch(
        np.zeros(1, np.int64), np.zeros(1, np.int64), one * 0.0, one,
        np.zeros(1, np.int64), np.zeros((1, 2)), np.zeros((1, 2)),
        np.zeros(1), np.zeros(1), np.ones((1, 2)), np.ones((1, 2)),
        np.ones(1), np.ones(1), 0.05,
    )
    y, a = maxpool_forward(np.zeros((1, 4, 1)), 2, 2, 0, 2)
    maxpool_backward(y, a, 4)
