import numpy as np
import pytest

from fdcheck import numerical_grad, rel_error
from sentikit.errors import DataError
from sentikit.glove import (
    CooccurrenceMatrix,
    GloveConfig,
    GloveModel,
    build_cooccurrence,
    cooccurrence_from_triples,
    embeddings_from_text,
    embeddings_to_text,
    glove_objective,
    init_glove,
    term_gradients,
    train_glove,
    weight_fn,
)
from sentikit.textprep import TokenSequence, build_vocab, encode_pad


def seq(ids):
    ids = np.asarray(ids, dtype=np.int64)
    return TokenSequence(ids=ids, true_length=len(ids))


def toy_corpus(n_tokens=200, vocab=12, seed=0, d=20):
    """Deterministic synthetic corpus with a skewed token distribution."""
    rng = np.random.default_rng(seed)
    probs = np.arange(vocab, 0, -1.0)
    probs /= probs.sum()
    sequences = []
    produced = 0
    while produced < n_tokens:
        take = min(d, n_tokens - produced)
        ids = rng.choice(np.arange(2, vocab + 2), size=take, p=probs)
        sequences.append(seq(ids))
        produced += take
    return sequences


class TestBuildCooccurrence:
    def test_hand_count_window_one(self):
        # tokens a=2, b=3 in sequence [a, b, a]
        X = build_cooccurrence([seq([2, 3, 2])], window=1, vocab_size=4)
        assert X.count(2, 3) == 2.0
        assert X.count(3, 2) == 2.0
        assert X.count(2, 2) == 0.0

    def test_window_two_reaches_ends(self):
        X = build_cooccurrence([seq([2, 3, 2])], window=2, vocab_size=4)
        assert X.count(2, 2) == 2.0  # positions 0 and 2, both directions
        assert X.count(2, 3) == 2.0

    def test_single_token_empty(self):
        X = build_cooccurrence([seq([5])], window=3, vocab_size=8)
        assert X.nnz == 0

    def test_concatenated_corpus_doubles_counts(self):
        corpus = [seq([2, 3, 4, 2]), seq([4, 4, 3])]
        X1 = build_cooccurrence(corpus, window=2, vocab_size=6)
        X2 = build_cooccurrence(corpus + corpus, window=2, vocab_size=6)
        np.testing.assert_array_equal(X1.rows, X2.rows)
        np.testing.assert_array_equal(X1.cols, X2.cols)
        np.testing.assert_array_equal(X1.counts * 2, X2.counts)

    def test_pad_and_unk_contribute_nothing(self):
        X = build_cooccurrence([seq([2, 0, 1, 3])], window=5, vocab_size=4)
        assert X.count(2, 3) == 1.0
        for i in (0, 1):
            assert not ((X.rows == i) | (X.cols == i)).any()

    def test_padding_tail_ignored(self):
        s = TokenSequence(ids=np.array([2, 3, 0, 0], dtype=np.int64), true_length=2)
        X = build_cooccurrence([s], window=3, vocab_size=4)
        assert X.nnz == 2  # (2,3) and (3,2) only

    def test_symmetry_on_random_corpus(self):
        corpus = toy_corpus(150, vocab=9, seed=4)
        X = build_cooccurrence(corpus, window=4, vocab_size=11)
        for i, j, c in zip(X.rows, X.cols, X.counts):
            assert X.count(j, i) == c

    def test_triples_roundtrip(self):
        X = build_cooccurrence(toy_corpus(80, seed=2), window=3, vocab_size=14)
        Y = cooccurrence_from_triples(X.to_triples(), vocab_size=14, window=3)
        np.testing.assert_array_equal(X.rows, Y.rows)
        np.testing.assert_array_equal(X.cols, Y.cols)
        np.testing.assert_array_equal(X.counts, Y.counts)


class TestWeightFn:
    def test_boundary_is_one(self):
        assert weight_fn(100.0, 100.0, 0.75) == 1.0
        assert weight_fn(250.0, 100.0, 0.75) == 1.0

    def test_zero_count_zero_weight(self):
        assert weight_fn(0.0, 100.0, 0.75) == 0.0

    def test_quarter_of_xmax(self):
        assert abs(weight_fn(25.0, 100.0, 0.75) - 2.0 ** (-1.5)) < 1e-12

    def test_continuity_at_xmax(self):
        assert abs(weight_fn(100.0 - 1e-9, 100.0, 0.75) - 1.0) < 1e-10

    def test_non_decreasing(self):
        xs = np.linspace(0.0, 150.0, 400)
        ws = weight_fn(xs, 100.0, 0.75)
        assert (np.diff(ws) >= 0).all()


def zero_model(vocab_size, dim):
    return GloveModel(
        word_vectors=np.zeros((vocab_size, dim)),
        context_vectors=np.zeros((vocab_size, dim)),
        word_bias=np.zeros(vocab_size),
        context_bias=np.zeros(vocab_size),
        loss_history=[],
    )


def single_entry_matrix(count, vocab_size=4, i=2, j=3):
    return CooccurrenceMatrix(
        rows=np.array([i], dtype=np.int64),
        cols=np.array([j], dtype=np.int64),
        counts=np.array([count], dtype=np.float64),
        vocab_size=vocab_size,
        window=5,
    )


class TestObjective:
    def test_empty_matrix_zero(self):
        X = CooccurrenceMatrix(
            rows=np.zeros(0, np.int64), cols=np.zeros(0, np.int64),
            counts=np.zeros(0), vocab_size=4, window=5,
        )
        assert glove_objective(zero_model(4, 3), X, GloveConfig(dim=3)) == 0.0

    def test_unit_count_zero_loss(self):
        X = single_entry_matrix(1.0)
        assert glove_objective(zero_model(4, 3), X, GloveConfig(dim=3)) == 0.0

    def test_count_e_analytic(self):
        X = single_entry_matrix(np.e)
        J = glove_objective(zero_model(4, 3), X, GloveConfig(dim=3))
        assert abs(J - (np.e / 100.0) ** 0.75) < 1e-12

    def test_nonpositive_count_rejected(self):
        X = single_entry_matrix(0.0)
        with pytest.raises(DataError):
            glove_objective(zero_model(4, 3), X, GloveConfig(dim=3))

    def test_term_gradients_match_finite_differences(self):
        cfg = GloveConfig(dim=5, seed=3)
        model = init_glove(6, cfg)
        i, j, x = 2, 4, 7.0

        def objective():
            return glove_objective(model, single_entry_matrix(x, 6, i=i, j=j), cfg)

        gw, gwc, gb, gbc = term_gradients(model, i, j, x, cfg)
        fd_w = numerical_grad(objective, model.word_vectors)
        fd_wc = numerical_grad(objective, model.context_vectors)
        fd_b = numerical_grad(objective, model.word_bias)
        fd_bc = numerical_grad(objective, model.context_bias)
        assert rel_error(gw, fd_w[i]) < 1e-6
        assert rel_error(gwc, fd_wc[j]) < 1e-6
        assert rel_error(gb, fd_b[i]) < 1e-6
        assert rel_error(gbc, fd_bc[j]) < 1e-6
        # rows other than i / j get no gradient from this term
        fd_w[i] = 0.0
        assert np.abs(fd_w).max() < 1e-8


class TestTrainGlove:
    def cfg(self, **kw):
        base = dict(dim=8, seed=0, epochs=10, window=4)
        base.update(kw)
        return GloveConfig(**base)

    def matrix(self):
        return build_cooccurrence(toy_corpus(200, vocab=12, seed=0), window=4, vocab_size=14)

    def test_loss_strictly_decreases(self):
        cfg = self.cfg()
        X = self.matrix()
        initial = glove_objective(init_glove(X.vocab_size, cfg), X, cfg)
        model = train_glove(X, cfg)
        losses = [initial] + model.loss_history
        assert len(model.loss_history) == 10
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 0.5 * initial

    def test_zero_epochs_returns_init(self):
        cfg = self.cfg(epochs=0)
        X = self.matrix()
        model = train_glove(X, cfg)
        ref = init_glove(X.vocab_size, cfg)
        np.testing.assert_array_equal(model.word_vectors, ref.word_vectors)
        np.testing.assert_array_equal(model.context_bias, ref.context_bias)
        assert model.loss_history == []

    def test_deterministic(self):
        X = self.matrix()
        a = train_glove(X, self.cfg(epochs=3))
        b = train_glove(X, self.cfg(epochs=3))
        np.testing.assert_array_equal(a.word_vectors, b.word_vectors)
        np.testing.assert_array_equal(a.word_bias, b.word_bias)
        assert a.loss_history == b.loss_history

    def test_empty_matrix_rejected(self):
        X = CooccurrenceMatrix(
            rows=np.zeros(0, np.int64), cols=np.zeros(0, np.int64),
            counts=np.zeros(0), vocab_size=4, window=5,
        )
        with pytest.raises(DataError):
            train_glove(X, self.cfg())

    def test_embedding_matrix_sums_vectors_and_zeroes_pad(self):
        X = self.matrix()
        model = train_glove(X, self.cfg(epochs=2))
        emb = model.embedding_matrix()
        np.testing.assert_array_equal(emb[0], 0.0)
        np.testing.assert_allclose(
            emb[3], model.word_vectors[3] + model.context_vectors[3], rtol=0, atol=0
        )


class TestEmbeddingText:
    def test_roundtrip(self):
        corpus = ["covid vaccine works", "vaccine hesitancy drops", "covid wave passes"]
        vocab = build_vocab(corpus, min_count=1)
        rng = np.random.default_rng(0)
        emb = rng.normal(size=(vocab.size, 6))
        emb[0] = 0.0
        emb[1] = 0.0
        text = embeddings_to_text(emb, vocab)
        back = embeddings_from_text(text, vocab, dim=6)
        np.testing.assert_array_equal(emb, back)

    def test_dimension_mismatch(self):
        vocab = build_vocab(["a b"], min_count=1)
        with pytest.raises(DataError):
            embeddings_from_text("a 1.0 2.0\n", vocab, dim=3)

    def test_unknown_tokens_skipped(self):
        vocab = build_vocab(["a b"], min_count=1)
        emb = embeddings_from_text("zzz 1.0\na 2.0\n", vocab, dim=1)
        assert emb[vocab.token_to_id["a"], 0] == 2.0


def test_encode_then_count_pipeline():
    corpus_text = ["covid vaccine covid", "vaccine works"]
    vocab = build_vocab(corpus_text, min_count=1)
    sequences = [encode_pad(t, vocab, d=5) for t in corpus_text]
    X = build_cooccurrence(sequences, window=2, vocab_size=vocab.size)
    cid = vocab.token_to_id["covid"]
    vid = vocab.token_to_id["vaccine"]
    assert X.count(cid, vid) == 2.0
    assert X.count(cid, cid) == 2.0
