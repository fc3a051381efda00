"""Trainable layers with analytic forward and backward passes.

Conventions: float64 everywhere; batched activations are (batch, length,
channels); every parameter container carries a matching gradient buffer that
backward passes accumulate into. Single-example functional forms wrap the
batched cores.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from sentikit import kernels
from sentikit.errors import DataError


def relu(x):
    return np.maximum(x, 0.0)


def softmax(z):
    """Row-wise softmax over the last axis, max-shifted for stability."""
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# 1D convolution, ReLU activation, "same" zero padding, stride 1
# ---------------------------------------------------------------------------


@dataclass
class Conv1DParams:
    filters: np.ndarray  # (F, h, k)
    bias: np.ndarray     # (F,)
    d_filters: np.ndarray
    d_bias: np.ndarray

    @classmethod
    def init(cls, rng, num_filters: int, width: int, in_dim: int) -> "Conv1DParams":
        scale = np.sqrt(2.0 / (width * in_dim))
        filters = rng.normal(0.0, scale, (num_filters, width, in_dim))
        return cls(
            filters=filters,
            bias=np.zeros(num_filters),
            d_filters=np.zeros_like(filters),
            d_bias=np.zeros(num_filters),
        )

    def zero_grad(self):
        self.d_filters[:] = 0.0
        self.d_bias[:] = 0.0


def _conv_pad(x, width):
    batch, length, in_dim = x.shape
    pad_left = (width - 1) // 2
    padded = np.zeros((batch, length + width - 1, in_dim))
    padded[:, pad_left : pad_left + length] = x
    return padded


def conv1d_forward_batch(x, p: Conv1DParams):
    """(B, L, k) -> activations (B, L, F) plus the pre-activation cache."""
    if x.shape[2] != p.filters.shape[2]:
        raise DataError(
            f"conv input dim {x.shape[2]} does not match filter dim {p.filters.shape[2]}"
        )
    width = p.filters.shape[1]
    length = x.shape[1]
    padded = _conv_pad(x, width)
    pre = np.tile(p.bias, (x.shape[0], length, 1))
    for off in range(width):
        pre += padded[:, off : off + length, :] @ p.filters[:, off, :].T
    return relu(pre), pre


def conv1d_backward_batch(dy, x, pre, p: Conv1DParams):
    """Accumulate filter/bias grads; return gradient w.r.t. the input."""
    width = p.filters.shape[1]
    length = x.shape[1]
    dpre = dy * (pre > 0)
    p.d_bias += dpre.sum(axis=(0, 1))
    padded = _conv_pad(x, width)
    dpadded = np.zeros_like(padded)
    for off in range(width):
        window = padded[:, off : off + length, :]
        p.d_filters[:, off, :] += np.einsum("blf,blk->fk", dpre, window)
        dpadded[:, off : off + length, :] += dpre @ p.filters[:, off, :]
    pad_left = (width - 1) // 2
    return dpadded[:, pad_left : pad_left + length]


def conv1d_forward(x, p: Conv1DParams):
    """Single sequence (L, k) -> (L, F)."""
    out, _ = conv1d_forward_batch(x[None], p)
    return out[0]


# ---------------------------------------------------------------------------
# Max pooling ("same" padding, -inf fill, first-index tie-break)
# ---------------------------------------------------------------------------


def maxpool1d_batch(x, pool: int, stride: int):
    """(B, L, C) -> ((B, ceil(L/stride), C), argmax positions)."""
    if pool < 1 or stride < 1:
        raise DataError("pool and stride must be >= 1")
    n_out, pad_left = kernels.pool_geometry(x.shape[1], pool, stride)
    return kernels.maxpool_forward(np.ascontiguousarray(x), pool, stride, pad_left, n_out)


def maxpool1d_backward_batch(dy, arg, length: int):
    return kernels.maxpool_backward(np.ascontiguousarray(dy), arg, length)


def maxpool1d(x, pool: int, stride: int):
    out, _ = maxpool1d_batch(x[None], pool, stride)
    return out[0]


# ---------------------------------------------------------------------------
# Inverted dropout
# ---------------------------------------------------------------------------


def dropout_mask(shape, rate: float, rng) -> np.ndarray:
    """Survivor mask pre-scaled by 1/(1-rate); multiply to apply dropout."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout(x, rate: float, train: bool, seed: int = 0):
    """Inverted dropout: identity at inference, unbiased scaling in training."""
    if not 0.0 <= rate < 1.0:
        raise DataError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    rng = np.random.default_rng(seed)
    return x * dropout_mask(x.shape, rate, rng)


# ---------------------------------------------------------------------------
# LSTM cell and bidirectional LSTM
#
# Parameters are stored fused: wx (k, 4*units), wh (units, 4*units), bias
# (4*units,) with gate column order [input, forget, output, candidate].
# Per-gate matrices of shape (units, k) / (units, units) are exposed as
# transposed views for inspection.
# ---------------------------------------------------------------------------


@dataclass
class LSTMCellParams:
    wx: np.ndarray
    wh: np.ndarray
    bias: np.ndarray
    d_wx: np.ndarray
    d_wh: np.ndarray
    d_bias: np.ndarray

    @classmethod
    def init(cls, rng, in_dim: int, units: int) -> "LSTMCellParams":
        wx = rng.normal(0.0, 1.0 / np.sqrt(in_dim), (in_dim, 4 * units))
        wh = rng.normal(0.0, 1.0 / np.sqrt(units), (units, 4 * units))
        bias = np.zeros(4 * units)
        return cls(wx, wh, bias, np.zeros_like(wx), np.zeros_like(wh), np.zeros_like(bias))

    @property
    def units(self) -> int:
        return self.wh.shape[0]

    def zero_grad(self):
        self.d_wx[:] = 0.0
        self.d_wh[:] = 0.0
        self.d_bias[:] = 0.0

    def _gate(self, which: int):
        h = self.units
        sl = slice(which * h, (which + 1) * h)
        return self.wx[:, sl].T, self.wh[:, sl].T, self.bias[sl]

    @property
    def w_i(self):
        return self._gate(0)[0]

    @property
    def w_f(self):
        return self._gate(1)[0]

    @property
    def w_o(self):
        return self._gate(2)[0]

    @property
    def w_c(self):
        return self._gate(3)[0]

    @property
    def u_i(self):
        return self._gate(0)[1]

    @property
    def u_f(self):
        return self._gate(1)[1]

    @property
    def u_o(self):
        return self._gate(2)[1]

    @property
    def u_c(self):
        return self._gate(3)[1]

    @property
    def b_i(self):
        return self._gate(0)[2]

    @property
    def b_f(self):
        return self._gate(1)[2]

    @property
    def b_o(self):
        return self._gate(2)[2]

    @property
    def b_c(self):
        return self._gate(3)[2]


def lstm_cell_step(x_t, h_prev, c_prev, p: LSTMCellParams):
    """One recurrence step: gate activations, cell update, hidden output."""
    if x_t.shape[-1] != p.wx.shape[0]:
        raise DataError(f"input dim {x_t.shape[-1]} does not match cell dim {p.wx.shape[0]}")
    h = p.units
    a = x_t @ p.wx + h_prev @ p.wh + p.bias
    i = sigmoid(a[..., :h])
    f = sigmoid(a[..., h : 2 * h])
    o = sigmoid(a[..., 2 * h : 3 * h])
    g = np.tanh(a[..., 3 * h :])
    c_t = i * g + f * c_prev
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def lstm_run_batch(x, p: LSTMCellParams):
    """Run the cell over a batch of sequences; returns hidden states + caches.

    x is (B, L, k); the result is ((B, L, units), cache) with the cache
    holding what the backward sweep needs.
    """
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))
    h_out, c_out, gates = kernels.lstm_forward(xt, p.wx, p.wh, p.bias)
    cache = (xt, h_out, c_out, gates)
    return np.ascontiguousarray(h_out.transpose(1, 0, 2)), cache


def lstm_backprop_batch(dy, cache, p: LSTMCellParams):
    """Accumulate parameter grads from upstream (B, L, units); return dx."""
    xt, h_out, c_out, gates = cache
    dh = np.ascontiguousarray(dy.transpose(1, 0, 2))
    dx, dwx, dwh, db = kernels.lstm_backward(dh, xt, p.wx, p.wh, h_out, c_out, gates)
    p.d_wx += dwx
    p.d_wh += dwh
    p.d_bias += db
    return np.ascontiguousarray(dx.transpose(1, 0, 2))


def bilstm_forward(x, p_fwd: LSTMCellParams, p_bwd: LSTMCellParams):
    """(L, k) -> (L, 2*units): forward states then backward states, per position."""
    if p_fwd.units != p_bwd.units:
        raise DataError("forward and backward cells must have the same unit count")
    out, _ = bilstm_run_batch(x[None], p_fwd, p_bwd)
    return out[0]


def bilstm_run_batch(x, p_fwd: LSTMCellParams, p_bwd: LSTMCellParams):
    h_f, cache_f = lstm_run_batch(x, p_fwd)
    h_b_rev, cache_b = lstm_run_batch(x[:, ::-1, :], p_bwd)
    out = np.concatenate([h_f, h_b_rev[:, ::-1, :]], axis=2)
    return out, (cache_f, cache_b)


def bilstm_backprop_batch(dy, cache, p_fwd: LSTMCellParams, p_bwd: LSTMCellParams):
    cache_f, cache_b = cache
    units = p_fwd.units
    dx = lstm_backprop_batch(dy[:, :, :units], cache_f, p_fwd)
    dx += lstm_backprop_batch(dy[:, ::-1, units:], cache_b, p_bwd)[:, ::-1, :]
    return dx


# ---------------------------------------------------------------------------
# Dense classifier head
# ---------------------------------------------------------------------------


@dataclass
class DenseParams:
    weight: np.ndarray  # (C, k_in)
    bias: np.ndarray    # (C,)
    activation: str     # "sigmoid" or "softmax"
    d_weight: np.ndarray
    d_bias: np.ndarray

    @classmethod
    def init(cls, rng, out_dim: int, in_dim: int, activation: str = "sigmoid") -> "DenseParams":
        if activation not in ("sigmoid", "softmax"):
            raise DataError(f"unknown dense activation {activation!r}")
        weight = rng.normal(0.0, 1.0 / np.sqrt(in_dim), (out_dim, in_dim))
        return cls(weight, np.zeros(out_dim), activation, np.zeros_like(weight), np.zeros(out_dim))

    def zero_grad(self):
        self.d_weight[:] = 0.0
        self.d_bias[:] = 0.0


def dense_forward_batch(x, p: DenseParams):
    if x.shape[-1] != p.weight.shape[1]:
        raise DataError(f"dense input dim {x.shape[-1]} does not match weight dim {p.weight.shape[1]}")
    z = x @ p.weight.T + p.bias
    out = sigmoid(z) if p.activation == "sigmoid" else softmax(z)
    return out, out


def dense_backward_batch(dy, x, out, p: DenseParams):
    if p.activation == "sigmoid":
        dz = dy * out * (1.0 - out)
    else:
        dz = out * (dy - np.sum(dy * out, axis=-1, keepdims=True))
    p.d_weight += dz.reshape(-1, dz.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    p.d_bias += dz.reshape(-1, dz.shape[-1]).sum(axis=0)
    return dz @ p.weight


def dense_forward(x, p: DenseParams):
    """Single vector (k_in,) -> (C,)."""
    out, _ = dense_forward_batch(x[None], p)
    return out[0]
