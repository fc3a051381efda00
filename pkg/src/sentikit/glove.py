"""GloVe embeddings: co-occurrence counting and weighted least-squares training.

The objective over stored co-occurrence entries is

    J = sum_ij f(X_ij) * (w_i . wc_j + b_i + bc_j - ln X_ij)^2

with the saturating weight f(x) = (x / x_max)^alpha below x_max and 1 above.
Training runs adagrad over the entries, one shuffled sweep per epoch; the
emitted embedding for a token is the sum of its word and context vectors.
"""

from dataclasses import dataclass

import numpy as np

from sentikit import kernels
from sentikit.errors import DataError, NumericError
from sentikit.textprep import PAD_ID, UNK_ID, Vocabulary


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Sparse symmetric counts; parallel arrays sorted by (row, col)."""

    rows: np.ndarray    # (nnz,) int64
    cols: np.ndarray    # (nnz,) int64
    counts: np.ndarray  # (nnz,) float64, strictly positive
    vocab_size: int
    window: int

    @property
    def nnz(self) -> int:
        return len(self.counts)

    def count(self, i: int, j: int) -> float:
        key = i * self.vocab_size + j
        keys = self.rows * self.vocab_size + self.cols
        pos = np.searchsorted(keys, key)
        if pos < len(keys) and keys[pos] == key:
            return float(self.counts[pos])
        return 0.0

    def to_triples(self) -> str:
        lines = [
            f"{i} {j} {c:.17g}"
            for i, j, c in zip(self.rows.tolist(), self.cols.tolist(), self.counts.tolist())
        ]
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class GloveConfig:
    dim: int = 50
    x_max: float = 100.0
    alpha: float = 0.75
    learning_rate: float = 0.05
    epochs: int = 25
    seed: int = 0
    window: int = 5

    def __post_init__(self):
        if self.dim < 1:
            raise DataError(f"embedding dim must be >= 1, got {self.dim}")
        if self.x_max <= 0 or not 0 < self.alpha <= 1:
            raise DataError("x_max must be positive and alpha in (0, 1]")
        if self.window < 1:
            raise DataError(f"window must be >= 1, got {self.window}")


@dataclass
class GloveModel:
    word_vectors: np.ndarray     # (N, dim)
    context_vectors: np.ndarray  # (N, dim)
    word_bias: np.ndarray        # (N,)
    context_bias: np.ndarray     # (N,)
    loss_history: list           # objective after each epoch

    def embedding_matrix(self) -> np.ndarray:
        """Per-token embedding: word vector plus context vector; pad row zeroed."""
        emb = self.word_vectors + self.context_vectors
        emb[PAD_ID] = 0.0
        return emb


def build_cooccurrence(corpus, window: int, vocab_size: int) -> CooccurrenceMatrix:
    """Count ordered token pairs within ``window`` positions inside a sequence.

    Each unordered co-occurrence event adds 1 to both X_ij and X_ji (flat
    counts, no distance weighting). Pad and unknown ids contribute nothing.
    """
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    key_chunks = []
    for seq in corpus:
        ids = seq.ids[: seq.true_length]
        n = len(ids)
        for offset in range(1, min(window, n - 1) + 1):
            left = ids[:-offset]
            right = ids[offset:]
            ok = (left > UNK_ID) & (right > UNK_ID)
            if not ok.any():
                continue
            li, ri = left[ok], right[ok]
            key_chunks.append(li * vocab_size + ri)
            key_chunks.append(ri * vocab_size + li)
    if not key_chunks:
        return CooccurrenceMatrix(
            rows=np.zeros(0, np.int64), cols=np.zeros(0, np.int64),
            counts=np.zeros(0), vocab_size=vocab_size, window=window,
        )
    keys, counts = np.unique(np.concatenate(key_chunks), return_counts=True)
    return CooccurrenceMatrix(
        rows=(keys // vocab_size).astype(np.int64),
        cols=(keys % vocab_size).astype(np.int64),
        counts=counts.astype(np.float64),
        vocab_size=vocab_size,
        window=window,
    )


def cooccurrence_from_triples(text: str, vocab_size: int, window: int) -> CooccurrenceMatrix:
    rows, cols, counts = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"co-occurrence line {lineno}: expected 'i j count'")
        rows.append(int(parts[0]))
        cols.append(int(parts[1]))
        counts.append(float(parts[2]))
    order = np.lexsort((cols, rows))
    return CooccurrenceMatrix(
        rows=np.asarray(rows, np.int64)[order],
        cols=np.asarray(cols, np.int64)[order],
        counts=np.asarray(counts, np.float64)[order],
        vocab_size=vocab_size,
        window=window,
    )


def weight_fn(x, x_max: float = 100.0, alpha: float = 0.75):
    """Saturating co-occurrence weight: (x/x_max)^alpha below x_max, else 1."""
    xa = np.asarray(x, dtype=np.float64)
    if xa.ndim == 0:
        xv = float(xa)
        return (xv / x_max) ** alpha if xv < x_max else 1.0
    out = np.ones_like(xa)
    below = xa < x_max
    out[below] = (xa[below] / x_max) ** alpha
    return out


def glove_objective(model: GloveModel, X: CooccurrenceMatrix, cfg: GloveConfig) -> float:
    """Weighted squared-error objective over the stored entries."""
    if model.word_vectors.shape[0] != X.vocab_size:
        raise DataError("model vocabulary size does not match the co-occurrence matrix")
    if X.nnz == 0:
        return 0.0
    if np.any(X.counts <= 0):
        raise DataError("co-occurrence entries must be strictly positive")
    w = model.word_vectors[X.rows]
    wc = model.context_vectors[X.cols]
    diff = (
        np.einsum("nd,nd->n", w, wc)
        + model.word_bias[X.rows]
        + model.context_bias[X.cols]
        - np.log(X.counts)
    )
    return float(np.sum(weight_fn(X.counts, cfg.x_max, cfg.alpha) * diff * diff))


def term_gradients(model: GloveModel, i: int, j: int, x: float, cfg: GloveConfig):
    """Analytic gradients of one objective term w.r.t. (w_i, wc_j, b_i, bc_j)."""
    f = weight_fn(x, cfg.x_max, cfg.alpha)
    diff = (
        float(np.dot(model.word_vectors[i], model.context_vectors[j]))
        + model.word_bias[i]
        + model.context_bias[j]
        - np.log(x)
    )
    g = 2.0 * f * diff
    return g * model.context_vectors[j], g * model.word_vectors[i], g, g


def init_glove(vocab_size: int, cfg: GloveConfig) -> GloveModel:
    """Uniform init in (-0.5/dim, 0.5/dim) from the config seed."""
    rng = np.random.default_rng(cfg.seed)
    span = 0.5 / cfg.dim
    shape = (vocab_size, cfg.dim)
    return GloveModel(
        word_vectors=rng.uniform(-span, span, shape),
        context_vectors=rng.uniform(-span, span, shape),
        word_bias=rng.uniform(-span, span, vocab_size),
        context_bias=rng.uniform(-span, span, vocab_size),
        loss_history=[],
    )


def train_glove(X: CooccurrenceMatrix, cfg: GloveConfig) -> GloveModel:
    """Adagrad training over shuffled entries; deterministic per (X, cfg).

    ``loss_history`` records the objective evaluated after each completed
    epoch. Raises NumericError naming the epoch if the objective goes
    non-finite.
    """
    if X.nnz == 0:
        raise DataError("cannot train on an empty co-occurrence matrix")
    model = init_glove(X.vocab_size, cfg)
    if cfg.epochs == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    logx = np.log(X.counts)
    fw = weight_fn(X.counts, cfg.x_max, cfg.alpha)
    acc_w = np.ones_like(model.word_vectors)
    acc_wc = np.ones_like(model.context_vectors)
    acc_b = np.ones_like(model.word_bias)
    acc_bc = np.ones_like(model.context_bias)
    for epoch in range(cfg.epochs):
        order = rng.permutation(X.nnz).astype(np.int64)
        kernels.glove_epoch(
            X.rows, X.cols, logx, fw, order,
            model.word_vectors, model.context_vectors,
            model.word_bias, model.context_bias,
            acc_w, acc_wc, acc_b, acc_bc,
            cfg.learning_rate,
        )
        j = glove_objective(model, X, cfg)
        if not np.isfinite(j):
            raise NumericError(f"objective diverged at epoch {epoch + 1}")
        model.loss_history.append(j)
    return model


def embeddings_to_text(emb: np.ndarray, vocab: Vocabulary) -> str:
    """Interchange format: one line per real token, 'token v1 v2 ... v_dim'."""
    lines = []
    tokens = vocab.tokens_by_id()
    for i in range(2, vocab.size):
        vec = " ".join(f"{v:.17g}" for v in emb[i])
        lines.append(f"{tokens[i]} {vec}")
    return "\n".join(lines) + ("\n" if lines else "")


def embeddings_from_text(text: str, vocab: Vocabulary, dim: int) -> np.ndarray:
    """Load token vectors into an (N, dim) table; pad/unk rows stay zero."""
    emb = np.zeros((vocab.size, dim))
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise DataError(
                f"embedding line {lineno}: expected token plus {dim} values, got {len(parts) - 1}"
            )
        tok = parts[0]
        i = vocab.token_to_id.get(tok)
        if i is None:
            continue
        emb[i] = [float(v) for v in parts[1:]]
    return emb
