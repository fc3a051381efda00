"""Hybrid classifier composition, categorical cross-entropy, Adam, training.

Eight scenario wirings pair an embedding stage (transformer encoder or a
frozen embedding table) with an ordered stack of CNN and/or BiLSTM blocks.
Every CNN block is followed by max pooling and dropout, every BiLSTM block by
dropout; the stack flattens into a 3-way dense head (sigmoid by default).

Training is plain minibatch gradient descent with Adam: per-epoch seeded
shuffling, full backward passes through the stack and, for the encoder
embedding, fine-tuning of the encoder itself. Frozen embedding tables still
accumulate gradients (for checking) but are never updated.
"""

from dataclasses import dataclass, field

import numpy as np

from sentikit import layers as L
from sentikit.dataset_io import LabeledExample
from sentikit.encoder import (
    EncoderConfig,
    EncoderWeights,
    encoder_backward_batch,
    encoder_forward_batch,
)
from sentikit.errors import DataError, NumericError
from sentikit.seeds import derive_seed

CCE_EPS = 1e-7

SCENARIOS = {
    1: ("bert", ("cnn", "bilstm")),
    2: ("bert", ("bilstm", "cnn")),
    3: ("bert", ("cnn",)),
    4: ("bert", ("bilstm",)),
    5: ("glove", ("cnn", "bilstm")),
    6: ("glove", ("bilstm", "cnn")),
    7: ("glove", ("cnn",)),
    8: ("glove", ("bilstm",)),
}


@dataclass(frozen=True)
class HybridSpec:
    scenario_id: int
    filter1: int
    filter2: int | None = None

    def __post_init__(self):
        if self.scenario_id not in SCENARIOS:
            raise DataError(f"scenario_id must be in 1..8, got {self.scenario_id}")
        two_layer = len(self.stack) == 2
        if two_layer and self.filter2 is None:
            raise DataError(f"scenario {self.scenario_id} needs filter2 (two stack layers)")
        if not two_layer and self.filter2 is not None:
            raise DataError(f"scenario {self.scenario_id} has one stack layer; filter2 not allowed")
        if self.filter1 < 1 or (self.filter2 is not None and self.filter2 < 1):
            raise DataError("stack widths must be positive")

    @property
    def embedding(self) -> str:
        return SCENARIOS[self.scenario_id][0]

    @property
    def stack(self) -> tuple[str, ...]:
        return SCENARIOS[self.scenario_id][1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 4
    dropout: float = 0.5
    batch_size: int = 128
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.optimizer != "adam":
            raise DataError(f"unsupported optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")


# ---------------------------------------------------------------------------
# Layer objects: thin stateful wrappers over the functional layer math
# ---------------------------------------------------------------------------


class GloveEmbeddingLayer:
    kind = "embedding"
    trainable = False

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)
        self.d_table = np.zeros_like(self.table)
        self._ids = None

    def forward(self, ids, train, rng):
        self._ids = ids
        return self.table[ids]

    def backward(self, dy):
        np.add.at(self.d_table, self._ids, dy)
        return None

    def zero_grad(self):
        self.d_table[:] = 0.0

    def param_arrays(self, prefix):
        yield f"{prefix}.table", self.table, self.d_table, self.trainable


class BertEncoderLayer:
    kind = "encoder"
    trainable = True

    def __init__(self, weights: EncoderWeights):
        self.weights = weights
        self._cache = None

    def forward(self, ids, train, rng):
        out, _, cache = encoder_forward_batch(ids, self.weights, train=train, rng=rng)
        self._cache = cache
        return out

    def backward(self, dy):
        encoder_backward_batch(dy, self._cache, self.weights)
        return None

    def zero_grad(self):
        self.weights.zero_grad()

    def param_arrays(self, prefix):
        for name, val in self.weights.params.items():
            yield f"{prefix}.{name}", val, self.weights.grads[name], self.trainable


class ConvLayer:
    kind = "conv"
    trainable = True

    def __init__(self, params: L.Conv1DParams):
        self.params = params
        self._cache = None

    def forward(self, x, train, rng):
        out, pre = L.conv1d_forward_batch(x, self.params)
        self._cache = (x, pre)
        return out

    def backward(self, dy):
        x, pre = self._cache
        return L.conv1d_backward_batch(dy, x, pre, self.params)

    def zero_grad(self):
        self.params.zero_grad()

    def param_arrays(self, prefix):
        yield f"{prefix}.filters", self.params.filters, self.params.d_filters, True
        yield f"{prefix}.bias", self.params.bias, self.params.d_bias, True


class MaxPoolLayer:
    kind = "maxpool"
    trainable = False

    def __init__(self, pool: int, stride: int):
        self.pool = pool
        self.stride = stride
        self._cache = None

    def forward(self, x, train, rng):
        out, arg = L.maxpool1d_batch(x, self.pool, self.stride)
        self._cache = (arg, x.shape[1])
        return out

    def backward(self, dy):
        arg, length = self._cache
        return L.maxpool1d_backward_batch(dy, arg, length)

    def zero_grad(self):
        pass

    def param_arrays(self, prefix):
        return iter(())


class DropoutLayer:
    kind = "dropout"
    trainable = False

    def __init__(self, rate: float):
        self.rate = rate
        self._mask = None

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        self._mask = L.dropout_mask(x.shape, self.rate, rng)
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask

    def zero_grad(self):
        pass

    def param_arrays(self, prefix):
        return iter(())


class BiLSTMLayer:
    """Bidirectional LSTM over the sequence; emitted features pass through ReLU."""

    kind = "bilstm"
    trainable = True

    def __init__(self, p_fwd: L.LSTMCellParams, p_bwd: L.LSTMCellParams, relu_output: bool = True):
        self.p_fwd = p_fwd
        self.p_bwd = p_bwd
        self.relu_output = relu_output
        self._cache = None

    def forward(self, x, train, rng):
        out, cache = L.bilstm_run_batch(x, self.p_fwd, self.p_bwd)
        pre = out
        if self.relu_output:
            out = L.relu(pre)
        self._cache = (cache, pre)
        return out

    def backward(self, dy):
        cache, pre = self._cache
        if self.relu_output:
            dy = dy * (pre > 0)
        return L.bilstm_backprop_batch(dy, cache, self.p_fwd, self.p_bwd)

    def zero_grad(self):
        self.p_fwd.zero_grad()
        self.p_bwd.zero_grad()

    def param_arrays(self, prefix):
        for tag, p in (("fwd", self.p_fwd), ("bwd", self.p_bwd)):
            yield f"{prefix}.{tag}.wx", p.wx, p.d_wx, True
            yield f"{prefix}.{tag}.wh", p.wh, p.d_wh, True
            yield f"{prefix}.{tag}.bias", p.bias, p.d_bias, True


class FlattenLayer:
    kind = "flatten"
    trainable = False

    def __init__(self):
        self._shape = None

    def forward(self, x, train, rng):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def zero_grad(self):
        pass

    def param_arrays(self, prefix):
        return iter(())


class DenseLayer:
    kind = "dense"
    trainable = True

    def __init__(self, params: L.DenseParams):
        self.params = params
        self._cache = None

    def forward(self, x, train, rng):
        out, _ = L.dense_forward_batch(x, self.params)
        self._cache = (x, out)
        return out

    def backward(self, dy):
        x, out = self._cache
        return L.dense_backward_batch(dy, x, out, self.params)

    def zero_grad(self):
        self.params.zero_grad()

    def param_arrays(self, prefix):
        yield f"{prefix}.weight", self.params.weight, self.params.d_weight, True
        yield f"{prefix}.bias", self.params.bias, self.params.d_bias, True


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


@dataclass
class TrainedModel:
    spec: HybridSpec
    d: int
    seed: int
    layers: list
    head_activation: str
    conv_width: int
    pool: int
    pool_stride: int
    glove_dim: int | None
    encoder_cfg: EncoderConfig | None
    history: list = field(default_factory=list)

    def layer_kinds(self) -> list[str]:
        return [layer.kind for layer in self.layers]

    def forward(self, ids, train: bool = False, rng=None):
        x = ids
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def parameters(self):
        """Yield (name, value, grad, trainable) over every parameter array."""
        for idx, layer in enumerate(self.layers):
            yield from layer.param_arrays(f"{idx}.{layer.kind}")

    def predict_ids(self, ids) -> np.ndarray:
        probs = self.forward(np.asarray(ids), train=False)
        return np.argmax(probs, axis=1)


def compose_model(
    spec: HybridSpec,
    vocab_size: int,
    d: int,
    seed: int,
    *,
    glove_table=None,
    glove_dim: int = 50,
    encoder_cfg: EncoderConfig | None = None,
    encoder_weights: EncoderWeights | None = None,
    conv_width: int = 10,
    pool: int = 2,
    pool_stride: int = 2,
    dropout_rate: float = 0.5,
    head_activation: str = "sigmoid",
) -> TrainedModel:
    """Build an initialized model for one scenario wiring.

    GloVe scenarios take a frozen ``glove_table`` (a seeded random table is
    created when omitted); encoder scenarios take an ``EncoderConfig`` and
    optionally pre-initialized weights.
    """
    rng = np.random.default_rng(derive_seed(seed, "compose"))
    model_layers: list = []
    if spec.embedding == "glove":
        if glove_table is None:
            glove_table = rng.normal(0.0, 0.5, (vocab_size, glove_dim))
            glove_table[0] = 0.0
        if glove_table.shape[0] != vocab_size:
            raise DataError(
                f"embedding table has {glove_table.shape[0]} rows, vocabulary needs {vocab_size}"
            )
        model_layers.append(GloveEmbeddingLayer(glove_table))
        cur_dim = emb_dim = glove_table.shape[1]
        used_encoder_cfg = None
    else:
        if encoder_cfg is None:
            encoder_cfg = EncoderConfig(
                vocab_size=vocab_size, max_positions=max(d, 1), seed=derive_seed(seed, "encoder")
            )
        if encoder_cfg.vocab_size != vocab_size:
            raise DataError("encoder config vocab_size does not match the vocabulary")
        if encoder_cfg.max_positions < d:
            raise DataError("encoder max_positions is smaller than the sequence length d")
        weights = encoder_weights if encoder_weights is not None else EncoderWeights.init(encoder_cfg)
        model_layers.append(BertEncoderLayer(weights))
        cur_dim = encoder_cfg.hidden
        used_encoder_cfg = encoder_cfg

    cur_len = d
    widths = [spec.filter1] if spec.filter2 is None else [spec.filter1, spec.filter2]
    for block, width in zip(spec.stack, widths):
        if block == "cnn":
            model_layers.append(ConvLayer(L.Conv1DParams.init(rng, width, conv_width, cur_dim)))
            cur_dim = width
            model_layers.append(MaxPoolLayer(pool, pool_stride))
            cur_len = -(-cur_len // pool_stride)
            model_layers.append(DropoutLayer(dropout_rate))
        else:
            p_fwd = L.LSTMCellParams.init(rng, cur_dim, width)
            p_bwd = L.LSTMCellParams.init(rng, cur_dim, width)
            model_layers.append(BiLSTMLayer(p_fwd, p_bwd))
            cur_dim = 2 * width
            model_layers.append(DropoutLayer(dropout_rate))
    model_layers.append(FlattenLayer())
    model_layers.append(DenseLayer(L.DenseParams.init(rng, 3, cur_len * cur_dim, head_activation)))
    return TrainedModel(
        spec=spec,
        d=d,
        seed=seed,
        layers=model_layers,
        head_activation=head_activation,
        conv_width=conv_width,
        pool=pool,
        pool_stride=pool_stride,
        glove_dim=None if spec.embedding == "bert" else emb_dim,
        encoder_cfg=used_encoder_cfg,
    )


# ---------------------------------------------------------------------------
# Loss, accuracy, Adam
# ---------------------------------------------------------------------------


def cce_loss(pred, truth) -> float:
    """Mean categorical cross-entropy with predictions clipped to [eps, 1-eps]."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DataError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    p = np.clip(pred, CCE_EPS, 1.0 - CCE_EPS)
    return float(-(truth * np.log(p)).sum() / pred.shape[0])


def cce_grad(pred, truth) -> np.ndarray:
    """d(loss)/d(pred); zero where the clip is active."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    p = np.clip(pred, CCE_EPS, 1.0 - CCE_EPS)
    inside = (pred > CCE_EPS) & (pred < 1.0 - CCE_EPS)
    return -(truth / p) * inside / pred.shape[0]


class AdamState:
    """First/second moment buffers and the shared step counter."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0


def adam_step(named_params, state: AdamState, lr: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update over (name, value, grad) triples, in place."""
    state.t += 1
    t = state.t
    for name, value, grad in named_params:
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}; step aborted")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(value)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(value)
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        value -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Training loop, prediction, accuracy
# ---------------------------------------------------------------------------


def stack_examples(examples):
    """(ids (n, d) int64, onehots (n, 3), labels (n,)) from LabeledExamples."""
    ids = np.stack([ex.ids for ex in examples]).astype(np.int64)
    onehots = np.stack([ex.onehot for ex in examples]).astype(np.float64)
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    return ids, onehots, labels


def fit(model: TrainedModel, train_data: list[LabeledExample], cfg: TrainConfig) -> TrainedModel:
    """Train in place: seeded per-epoch shuffles, Adam updates, loss/accuracy history.

    The history gets one (mean_loss, train_accuracy) pair per epoch; the mean
    loss is the example-weighted mean over training batches (dropout active),
    accuracy is measured on the training set after the epoch (dropout off).
    """
    if not train_data:
        raise DataError("training data is empty")
    ids, onehots, labels = stack_examples(train_data)
    if cfg.epochs == 0:
        return model
    for layer in model.layers:
        if isinstance(layer, DropoutLayer):
            layer.rate = cfg.dropout
    rng_shuffle = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    rng_dropout = np.random.default_rng(derive_seed(cfg.seed, "dropout"))
    state = AdamState()
    n = len(train_data)
    for epoch in range(cfg.epochs):
        perm = rng_shuffle.permutation(n)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            take = perm[start : start + cfg.batch_size]
            xb, yb = ids[take], onehots[take]
            probs = model.forward(xb, train=True, rng=rng_dropout)
            loss = cce_loss(probs, yb)
            if not np.isfinite(loss):
                raise NumericError(f"training diverged at epoch {epoch + 1} (non-finite loss)")
            total_loss += loss * len(take)
            model.zero_grad()
            model.backward(cce_grad(probs, yb))
            adam_step(
                ((name, val, grad) for name, val, grad, trainable in model.parameters() if trainable),
                state,
                lr=cfg.learning_rate,
            )
        acc = evaluate_accuracy(model.predict_ids(ids), labels)
        model.history.append((total_loss / n, acc))
    return model


def predict(model: TrainedModel, examples) -> np.ndarray:
    """Class indices via argmax over the head outputs; ties go to the lowest index."""
    if isinstance(examples, np.ndarray):
        ids = examples
    else:
        ids = np.stack([ex.ids for ex in examples]).astype(np.int64)
    return model.predict_ids(ids)


def evaluate_accuracy(pred, truth) -> float:
    """Correct predictions over total, as a percentage."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DataError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.size == 0:
        raise DataError("cannot compute accuracy of an empty prediction set")
    return float((pred == truth).mean() * 100.0)
