import numpy as np
import pytest

from fdcheck import numerical_grad, rel_error
from sentikit.encoder import (
    EncoderConfig,
    EncoderWeights,
    SequenceEmbedding,
    attention_probs,
    encoder_backward_batch,
    encoder_forward,
    encoder_forward_batch,
    gelu,
    gelu_grad,
    init_or_load_weights,
    layer_norm,
    load_weights,
    multi_head_attention,
    save_weights,
    sequence_mask,
)
from sentikit.errors import ArchiveError, DataError
from sentikit.textprep import TokenSequence


def tiny_cfg(**kw):
    base = dict(vocab_size=11, num_layers=1, hidden=8, heads=2,
                max_positions=6, ffn_dim=16, dropout=0.0, seed=0)
    base.update(kw)
    return EncoderConfig(**base)


def attn_weights(rng, hidden):
    w = {}
    for name in ("wq", "wk", "wv", "wo"):
        w[name] = rng.normal(0.0, 0.3, (hidden, hidden))
    for name in ("bq", "bk", "bv", "bo"):
        w[name] = rng.normal(0.0, 0.1, hidden)
    return w


class TestMultiHeadAttention:
    def test_singleton_attends_to_itself(self):
        rng = np.random.default_rng(0)
        w = attn_weights(rng, 4)
        x = rng.normal(size=(1, 4))
        probs = attention_probs(x, w, np.array([True]), heads=2)
        np.testing.assert_allclose(probs, np.ones((2, 1, 1)))

    def test_identical_rows_give_uniform_attention(self):
        rng = np.random.default_rng(1)
        w = attn_weights(rng, 4)
        x = np.tile(rng.normal(size=(1, 4)), (5, 1))
        probs = attention_probs(x, w, np.ones(5, dtype=bool), heads=2)
        np.testing.assert_allclose(probs, 1.0 / 5.0, atol=1e-12)

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(2)
        w = attn_weights(rng, 6)
        x = rng.normal(size=(7, 6))
        mask = np.array([True, True, False, True, False, True, True])
        probs = attention_probs(x, w, mask, heads=3)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)
        assert (probs[:, :, ~mask] == 0.0).all()

    def test_output_shape(self):
        rng = np.random.default_rng(3)
        w = attn_weights(rng, 6)
        x = rng.normal(size=(5, 6))
        out = multi_head_attention(x, w, np.ones(5, dtype=bool), heads=2)
        assert out.shape == (5, 6)

    def test_all_masked_rejected(self):
        rng = np.random.default_rng(4)
        w = attn_weights(rng, 4)
        with pytest.raises(DataError):
            multi_head_attention(rng.normal(size=(3, 4)), w, np.zeros(3, dtype=bool), heads=2)


class TestLayerNorm:
    def test_constant_vector_collapses_to_zero(self):
        out = layer_norm(np.full(8, 3.7), np.ones(8), np.zeros(8))
        assert np.abs(out).max() < 1e-2

    def test_normalizes_mean_and_variance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(2.0, 3.0, size=16)
        out = layer_norm(x, np.ones(16), np.zeros(16))
        assert abs(out.mean()) < 1e-12
        assert abs(out.var() - 1.0) < 1e-4

    def test_zero_gain_returns_shift(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=8)
        shift = rng.normal(size=8)
        np.testing.assert_array_equal(layer_norm(x, np.zeros(8), shift), shift)


class TestGelu:
    def test_fixed_points(self):
        assert gelu(np.array(0.0)) == 0.0
        assert abs(gelu(np.array(10.0)) - 10.0) < 1e-4

    def test_gradient_matches_finite_differences(self):
        x = np.linspace(-4.0, 4.0, 41)
        fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6
        np.testing.assert_allclose(gelu_grad(x), fd, atol=1e-8)


class TestEncoderForward:
    def test_default_shape_is_hidden_128(self):
        cfg = EncoderConfig(vocab_size=20, max_positions=12)
        weights = EncoderWeights.init(cfg)
        tokens = TokenSequence(ids=np.array([3, 4, 5, 0, 0, 0, 0, 0, 0, 0, 0, 0],
                                            dtype=np.int64), true_length=3)
        emb = encoder_forward(tokens, weights)
        assert isinstance(emb, SequenceEmbedding)
        assert emb.matrix.shape == (12, 128)
        np.testing.assert_array_equal(emb.mask, [True] * 3 + [False] * 9)

    def test_inference_deterministic(self):
        weights = EncoderWeights.init(tiny_cfg())
        ids = np.array([[2, 3, 4, 0, 0, 0]])
        a, _, _ = encoder_forward_batch(ids, weights)
        b, _, _ = encoder_forward_batch(ids, weights)
        np.testing.assert_array_equal(a, b)

    def test_training_dropout_changes_output(self):
        weights = EncoderWeights.init(tiny_cfg(dropout=0.5))
        ids = np.array([[2, 3, 4, 5, 6, 7]])
        base, _, _ = encoder_forward_batch(ids, weights, train=False)
        dropped, _, _ = encoder_forward_batch(
            ids, weights, train=True, rng=np.random.default_rng(0)
        )
        assert np.abs(base - dropped).max() > 1e-6

    def test_masked_rows_zeroed(self):
        weights = EncoderWeights.init(tiny_cfg())
        ids = np.array([[2, 3, 0, 0, 0, 0]])
        out, mask, _ = encoder_forward_batch(ids, weights)
        np.testing.assert_array_equal(out[0, 2:], 0.0)
        assert mask[0, :2].all() and not mask[0, 2:].any()

    def test_empty_sequence_attends_position_zero(self):
        weights = EncoderWeights.init(tiny_cfg())
        ids = np.zeros((1, 6), dtype=np.int64)
        out, mask, _ = encoder_forward_batch(ids, weights)
        assert mask[0, 0] and not mask[0, 1:].any()
        assert np.isfinite(out).all()
        assert np.abs(out[0, 0]).max() > 0.0

    def test_id_out_of_range(self):
        weights = EncoderWeights.init(tiny_cfg())
        with pytest.raises(DataError):
            encoder_forward_batch(np.array([[99, 0, 0, 0, 0, 0]]), weights)

    def test_residual_wiring_reduces_to_normed_embeddings(self):
        """With attention and feed-forward output projections zeroed, the
        encoder output is exactly the layer-norm chain over token+position
        embeddings."""
        cfg = tiny_cfg(num_layers=2)
        weights = EncoderWeights.init(cfg)
        for n in range(2):
            for name in ("wo", "bo", "w2", "b2"):
                weights.params[f"l{n}.{name}"][:] = 0.0
        ids = np.array([[2, 5, 7, 3, 0, 0]])
        out, mask, _ = encoder_forward_batch(ids, weights)
        x = weights.params["tok_emb"][ids] + weights.params["pos_emb"][:6]
        for n in range(2):
            x = layer_norm(x, weights.params[f"l{n}.ln1_g"], weights.params[f"l{n}.ln1_b"])
            x = layer_norm(x, weights.params[f"l{n}.ln2_g"], weights.params[f"l{n}.ln2_b"])
        np.testing.assert_array_equal(out, x * mask[:, :, None])

    def test_pad_positions_never_leak_into_real_ones(self):
        """Holding the mask fixed, changing the content at masked slots leaves
        unmasked outputs bitwise unchanged."""
        weights = EncoderWeights.init(tiny_cfg())
        ids_a = np.array([[2, 3, 4, 0, 0, 0]])
        mask = sequence_mask(ids_a.copy())
        ids_b = ids_a.copy()
        ids_b[0, 4] = 9  # perturb a pad slot while keeping it masked
        out_a, _, _ = encoder_forward_batch(ids_a, weights, mask=mask)
        out_b, _, _ = encoder_forward_batch(ids_b, weights, mask=mask)
        np.testing.assert_array_equal(out_a[0, :3], out_b[0, :3])


class TestEncoderGradients:
    def test_all_parameter_gradients_match_finite_differences(self):
        cfg = tiny_cfg()
        weights = EncoderWeights.init(cfg)
        rng = np.random.default_rng(7)
        ids = np.array([[2, 5, 7, 3, 0, 0], [4, 6, 0, 0, 0, 0]])
        probe = rng.normal(size=(2, 6, cfg.hidden))

        def loss():
            out, _, _ = encoder_forward_batch(ids, weights)
            return float((out * probe).sum())

        out, _, cache = encoder_forward_batch(ids, weights)
        weights.zero_grad()
        encoder_backward_batch(probe, cache, weights)
        worst = {}
        for name, value in weights.params.items():
            fd = numerical_grad(loss, value)
            worst[name] = rel_error(weights.grads[name], fd)
        bad = {k: v for k, v in worst.items() if v >= 1e-4}
        assert not bad, f"gradient mismatches: {bad}"


class TestWeightsIO:
    def test_same_seed_same_weights(self):
        a = EncoderWeights.init(tiny_cfg(seed=5))
        b = EncoderWeights.init(tiny_cfg(seed=5))
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_save_load_roundtrip_bitwise(self, tmp_path):
        cfg = tiny_cfg(seed=3)
        weights = EncoderWeights.init(cfg)
        path = tmp_path / "enc.bin"
        save_weights(path, weights)
        loaded = load_weights(path, cfg)
        ids = np.array([[2, 3, 4, 5, 0, 0]])
        out_a, _, _ = encoder_forward_batch(ids, weights)
        out_b, _, _ = encoder_forward_batch(ids, loaded)
        np.testing.assert_array_equal(out_a, out_b)

    def test_shape_mismatch_rejected(self, tmp_path):
        path = tmp_path / "enc.bin"
        save_weights(path, EncoderWeights.init(tiny_cfg(hidden=8)))
        with pytest.raises(ArchiveError, match="geometry"):
            load_weights(path, tiny_cfg(hidden=4, ffn_dim=8))

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "enc.bin"
        save_weights(path, EncoderWeights.init(tiny_cfg()))
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ArchiveError):
            load_weights(path, tiny_cfg())

    def test_init_or_load_dispatches(self, tmp_path):
        cfg = tiny_cfg(seed=1)
        from_seed = init_or_load_weights(cfg, 42)
        ref = EncoderWeights.init(tiny_cfg(seed=42))
        np.testing.assert_array_equal(from_seed.params["tok_emb"], ref.params["tok_emb"])
        path = tmp_path / "enc.bin"
        save_weights(path, from_seed)
        from_file = init_or_load_weights(cfg, path)
        np.testing.assert_array_equal(from_file.params["l0.wq"], from_seed.params["l0.wq"])
