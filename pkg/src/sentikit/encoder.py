"""Miniature transformer encoder producing per-token contextual embeddings.

Token + learned position embeddings feed ``num_layers`` identical blocks:
multi-head self-attention and a GELU feed-forward, each followed by a
residual add and layer normalization (post-norm). Attention masks padding
ids so pad positions never influence real ones; output rows at masked
positions are zeroed, so they carry no gradient. All backward passes are
analytic and exact.

The default shape is 2 layers, hidden 128, 2 attention heads; every piece of
the geometry is configurable for small-scale testing.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from sentikit import binio
from sentikit.errors import ArchiveError, DataError
from sentikit.layers import dropout_mask
from sentikit.textprep import TokenSequence

_LN_EPS = 1e-5
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden: int = 128
    heads: int = 2
    max_positions: int = 100
    ffn_dim: int = 0  # 0 means 4 * hidden
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise DataError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.vocab_size < 2 or self.num_layers < 1 or self.max_positions < 1:
            raise DataError("vocab_size, num_layers and max_positions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def ffn(self) -> int:
        return self.ffn_dim if self.ffn_dim else 4 * self.hidden

    def to_meta(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "num_layers": self.num_layers,
            "hidden": self.hidden,
            "heads": self.heads,
            "max_positions": self.max_positions,
            "ffn_dim": self.ffn,
            "dropout": self.dropout,
            "seed": self.seed,
        }


def _param_order(cfg: EncoderConfig) -> list[str]:
    names = ["tok_emb", "pos_emb"]
    for n in range(cfg.num_layers):
        for p in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo",
                  "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b"):
            names.append(f"l{n}.{p}")
    return names


class EncoderWeights:
    """Named parameter arrays plus matching gradient buffers, in declared order."""

    def __init__(self, cfg: EncoderConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = params
        self.grads = {k: np.zeros_like(v) for k, v in params.items()}

    def zero_grad(self):
        for g in self.grads.values():
            g[:] = 0.0

    @classmethod
    def init(cls, cfg: EncoderConfig) -> "EncoderWeights":
        rng = np.random.default_rng(cfg.seed)
        h, f = cfg.hidden, cfg.ffn

        def mat(*shape):
            return rng.normal(0.0, 0.02, shape)

        params: dict[str, np.ndarray] = {
            "tok_emb": mat(cfg.vocab_size, h),
            "pos_emb": mat(cfg.max_positions, h),
        }
        for n in range(cfg.num_layers):
            params[f"l{n}.wq"] = mat(h, h)
            params[f"l{n}.wk"] = mat(h, h)
            params[f"l{n}.wv"] = mat(h, h)
            params[f"l{n}.wo"] = mat(h, h)
            params[f"l{n}.bq"] = np.zeros(h)
            params[f"l{n}.bk"] = np.zeros(h)
            params[f"l{n}.bv"] = np.zeros(h)
            params[f"l{n}.bo"] = np.zeros(h)
            params[f"l{n}.ln1_g"] = np.ones(h)
            params[f"l{n}.ln1_b"] = np.zeros(h)
            params[f"l{n}.w1"] = mat(h, f)
            params[f"l{n}.b1"] = np.zeros(f)
            params[f"l{n}.w2"] = mat(f, h)
            params[f"l{n}.b2"] = np.zeros(h)
            params[f"l{n}.ln2_g"] = np.ones(h)
            params[f"l{n}.ln2_b"] = np.zeros(h)
        assert list(params) == _param_order(cfg)
        return cls(cfg, params)


@dataclass(frozen=True)
class SequenceEmbedding:
    matrix: np.ndarray  # (d, hidden)
    mask: np.ndarray    # (d,) bool, True at attended positions


def gelu(x):
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def layer_norm(x, gain, shift, eps: float = _LN_EPS):
    """Normalize over the last axis to zero mean/unit variance, then scale and shift."""
    out, _ = _ln_forward(x, gain, shift, eps)
    return out


def _ln_forward(x, gain, shift, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return gain * xhat + shift, (xhat, inv)


def _ln_backward(dy, gain, cache):
    xhat, inv = cache
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=axes), dy.sum(axis=axes)


def _split_heads(x, heads):
    b, length, hidden = x.shape
    return x.reshape(b, length, heads, hidden // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, heads, length, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, heads * hd)


def _mha_forward(x, w, prefix, mask, heads):
    q = x @ w[prefix + "wq"] + w[prefix + "bq"]
    k = x @ w[prefix + "wk"] + w[prefix + "bk"]
    v = x @ w[prefix + "wv"] + w[prefix + "bv"]
    qh, kh, vh = (_split_heads(a, heads) for a in (q, k, v))
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores = np.where(mask[:, None, None, :], scores, -np.inf)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    probs = e / e.sum(axis=-1, keepdims=True)
    ctx = _merge_heads(probs @ vh)
    out = ctx @ w[prefix + "wo"] + w[prefix + "bo"]
    return out, (x, qh, kh, vh, probs, ctx, scale)


def _mha_backward(dout, cache, w, g, prefix, heads):
    x, qh, kh, vh, probs, ctx, scale = cache
    flat_out = dout.reshape(-1, dout.shape[-1])
    g[prefix + "wo"] += ctx.reshape(-1, ctx.shape[-1]).T @ flat_out
    g[prefix + "bo"] += flat_out.sum(axis=0)
    dctx = _split_heads(dout @ w[prefix + "wo"].T, heads)
    dprobs = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))
    dqh = (dscores @ kh) * scale
    dkh = (dscores.transpose(0, 1, 3, 2) @ qh) * scale
    dq, dk, dv = (_merge_heads(a) for a in (dqh, dkh, dvh))
    flat_x = x.reshape(-1, x.shape[-1])
    dx = np.zeros_like(x)
    for name, da in (("q", dq), ("k", dk), ("v", dv)):
        flat_da = da.reshape(-1, da.shape[-1])
        g[prefix + "w" + name] += flat_x.T @ flat_da
        g[prefix + "b" + name] += flat_da.sum(axis=0)
        dx += da @ w[prefix + "w" + name].T
    return dx


def multi_head_attention(inputs, weights, mask, heads: int):
    """Masked scaled dot-product self-attention over one (d, hidden) sequence.

    ``weights`` maps wq/wk/wv/wo/bq/bk/bv/bo to arrays; ``mask`` is a boolean
    (d,) vector, True at attended positions.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("attention requires at least one unmasked position")
    out, _ = _mha_forward(inputs[None], dict(weights), "", mask[None], heads)
    return out[0]


def attention_probs(inputs, weights, mask, heads: int):
    """The (heads, d, d) attention distributions for one sequence."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("attention requires at least one unmasked position")
    _, cache = _mha_forward(inputs[None], dict(weights), "", mask[None], heads)
    return cache[4][0]


def sequence_mask(ids) -> np.ndarray:
    """True at non-pad positions; position 0 stays attended for empty texts."""
    mask = ids != 0
    mask[..., 0] = True
    return mask


def encoder_forward_batch(ids, weights: EncoderWeights, train: bool = False, rng=None,
                          mask=None):
    """(B, d) token ids -> ((B, d, hidden), (B, d) mask, cache).

    Masked (pad) rows of the output are zeroed. Dropout runs only when
    ``train`` is set, drawing from ``rng``. ``mask`` overrides the pad mask
    derived from the ids; each row must keep at least one attended position.
    """
    cfg = weights.cfg
    w = weights.params
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise DataError("expected a (batch, d) id array")
    d = ids.shape[1]
    if d > cfg.max_positions:
        raise DataError(f"sequence length {d} exceeds max_positions {cfg.max_positions}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise DataError("token id out of range for the encoder vocabulary")
    if mask is None:
        mask = sequence_mask(ids)
    else:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=1).all():
            raise DataError("attention requires at least one unmasked position per sequence")
    if train and rng is None:
        rng = np.random.default_rng(cfg.seed)
    x = w["tok_emb"][ids] + w["pos_emb"][:d]
    layer_caches = []
    for n in range(cfg.num_layers):
        p = f"l{n}."
        attn, mha_cache = _mha_forward(x, w, p, mask, cfg.heads)
        attn_drop = None
        if train and cfg.dropout > 0.0:
            attn_drop = dropout_mask(attn.shape, cfg.dropout, rng)
            attn = attn * attn_drop
        res1 = x + attn
        x1, ln1_cache = _ln_forward(res1, w[p + "ln1_g"], w[p + "ln1_b"], _LN_EPS)
        pre = x1 @ w[p + "w1"] + w[p + "b1"]
        act = gelu(pre)
        ffn = act @ w[p + "w2"] + w[p + "b2"]
        ffn_drop = None
        if train and cfg.dropout > 0.0:
            ffn_drop = dropout_mask(ffn.shape, cfg.dropout, rng)
            ffn = ffn * ffn_drop
        res2 = x1 + ffn
        x2, ln2_cache = _ln_forward(res2, w[p + "ln2_g"], w[p + "ln2_b"], _LN_EPS)
        layer_caches.append((mha_cache, attn_drop, ln1_cache, x1, pre, act, ffn_drop, ln2_cache))
        x = x2
    out = x * mask[:, :, None]
    return out, mask, (ids, mask, layer_caches)


def encoder_backward_batch(dout, cache, weights: EncoderWeights):
    """Accumulate gradients for every encoder parameter from d(loss)/d(output)."""
    cfg = weights.cfg
    w, g = weights.params, weights.grads
    ids, mask, layer_caches = cache
    dx = dout * mask[:, :, None]
    for n in range(cfg.num_layers - 1, -1, -1):
        p = f"l{n}."
        mha_cache, attn_drop, ln1_cache, x1, pre, act, ffn_drop, ln2_cache = layer_caches[n]
        dres2, dg2, db2 = _ln_backward(dx, w[p + "ln2_g"], ln2_cache)
        g[p + "ln2_g"] += dg2
        g[p + "ln2_b"] += db2
        dffn = dres2 if ffn_drop is None else dres2 * ffn_drop
        flat_dffn = dffn.reshape(-1, dffn.shape[-1])
        g[p + "w2"] += act.reshape(-1, act.shape[-1]).T @ flat_dffn
        g[p + "b2"] += flat_dffn.sum(axis=0)
        dact = dffn @ w[p + "w2"].T
        dpre = dact * gelu_grad(pre)
        flat_dpre = dpre.reshape(-1, dpre.shape[-1])
        g[p + "w1"] += x1.reshape(-1, x1.shape[-1]).T @ flat_dpre
        g[p + "b1"] += flat_dpre.sum(axis=0)
        dx1 = dres2 + dpre @ w[p + "w1"].T
        dres1, dg1, db1 = _ln_backward(dx1, w[p + "ln1_g"], ln1_cache)
        g[p + "ln1_g"] += dg1
        g[p + "ln1_b"] += db1
        dattn = dres1 if attn_drop is None else dres1 * attn_drop
        dx = dres1 + _mha_backward(dattn, mha_cache, w, g, p, cfg.heads)
    d = ids.shape[1]
    np.add.at(g["tok_emb"], ids, dx)
    g["pos_emb"][:d] += dx.sum(axis=0)


def encoder_forward(tokens: TokenSequence, weights: EncoderWeights, train: bool = False,
                    rng=None) -> SequenceEmbedding:
    """Contextual embedding of one fixed-length token sequence."""
    out, mask, _ = encoder_forward_batch(tokens.ids[None], weights, train=train, rng=rng)
    return SequenceEmbedding(matrix=out[0], mask=mask[0])


def save_weights(path, weights: EncoderWeights):
    arrays = {name: weights.params[name] for name in _param_order(weights.cfg)}
    binio.write_container(path, "encoder-weights", weights.cfg.to_meta(), arrays)


def load_weights(path, cfg: EncoderConfig) -> EncoderWeights:
    """Bit-exact restore; refuses geometry that does not match ``cfg``."""
    meta, arrays = binio.read_container(path, "encoder-weights")
    stored = {k: meta.get(k) for k in ("vocab_size", "num_layers", "hidden", "heads",
                                       "max_positions", "ffn_dim")}
    wanted = {k: cfg.to_meta()[k] for k in stored}
    if stored != wanted:
        raise ArchiveError(f"{path}: weight geometry {stored} does not match config {wanted}")
    params = {}
    for name in _param_order(cfg):
        if name not in arrays:
            raise ArchiveError(f"{path}: missing parameter {name!r}")
        params[name] = arrays[name].astype(np.float64, copy=False)
    return EncoderWeights(cfg, params)


def init_or_load_weights(cfg: EncoderConfig, source) -> EncoderWeights:
    """``source`` is an int seed (random init) or a path to a weights file."""
    if isinstance(source, (int, np.integer)):
        seeded = EncoderConfig(**{**cfg.to_meta(), "seed": int(source)})
        return EncoderWeights.init(seeded)
    return load_weights(source, cfg)
