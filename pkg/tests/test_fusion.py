import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emofuse import fusion
from emofuse.audiodsp import SpectroImage
from emofuse.datamodel import MediaRecord, Modality
from emofuse.fusion import (PAD_ID, UNK_ID, Batch, FusionConfig, FusionInput, NumericFailure, TrainHyper,
                            backward, bce_from_probs, bce_with_logits, build_input, forward, init_model)

SMALL = FusionConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_text_tokens=6)


def vocab_of(n):
    v = {"[PAD]": PAD_ID, "[UNK]": UNK_ID}
    v.update({f"w{i}": i + 2 for i in range(n - 2)})
    return v


def random_input(cfg, rng, n_vocab=12, n_valid=None):
    T = cfg.max_text_tokens
    k = int(rng.integers(0, T + 1)) if n_valid is None else n_valid
    ids = np.full(T, PAD_ID)
    ids[:k] = rng.integers(1, n_vocab, size=k)
    mask = np.arange(T) < k
    return FusionInput(ids, mask, rng.random((cfg.n_patches, cfg.patch_dim)))


def randomized(model, rng, scale=0.3):
    """Model with every parameter (including biases and gains) drawn at random."""
    m = model.copy()
    for k, v in m.params.items():
        m.params[k] = v + scale * rng.standard_normal(v.shape)
    return m


@pytest.fixture
def small_model(rng):
    return randomized(init_model(SMALL, vocab_of(12)), rng)


class TestBuildInput:
    img = SpectroImage(np.full((64, 64), 0.5))

    def test_empty_transcript(self):
        inp = build_input(MediaRecord(id="a"), self.img, vocab_of(4))
        assert not inp.text_mask.any() and (inp.token_ids == PAD_ID).all()
        assert inp.patches.shape == (64, 64)

    def test_constant_image(self):
        inp = build_input(MediaRecord(id="a"), self.img, vocab_of(4))
        assert (inp.patches == 0.5).all()

    def test_truncation(self):
        words = " ".join(f"w{i % 5}" for i in range(33))
        inp = build_input(MediaRecord(id="a", transcript=words), self.img, vocab_of(7), FusionConfig())
        assert inp.text_mask.all() and inp.token_ids.size == 32
        assert list(inp.token_ids[:5]) == [2, 3, 4, 5, 6]

    def test_unknown_token(self):
        inp = build_input(MediaRecord(id="a", transcript="w0 zebra"), self.img, vocab_of(4))
        assert list(inp.token_ids[:2]) == [2, UNK_ID]

    def test_patch_order_row_major(self):
        px = np.arange(64 * 64, dtype=float).reshape(64, 64) / 4096
        p = fusion.image_patches(px, 8)
        np.testing.assert_array_equal(p[1], px[:8, 8:16].ravel())
        np.testing.assert_array_equal(p[8], px[8:16, :8].ravel())

    def test_rejects_bad_image(self):
        with pytest.raises(ValueError):
            build_input(MediaRecord(id="a"), SpectroImage(np.zeros((32, 32))), vocab_of(4))


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(d_model=10, n_heads=4)
    with pytest.raises(ValueError):
        FusionConfig(patch_size=7)


def test_init_stats():
    m = init_model(FusionConfig(), vocab_of(50))
    assert (m.params["l0.ln1_g"] == 1).all() and (m.params["l1.b1"] == 0).all()
    assert abs(m.params["tok_emb"].std() - 0.02) < 0.002
    for name, shape in fusion.param_shapes(m.config, 50).items():
        assert m.params[name].shape == shape


class TestForward:
    def test_zero_head_gives_half(self, small_model, rng):
        m = small_model.copy()
        m.params["head_w"][:] = 0
        m.params["head_b"][:] = 0
        out = forward(m, Batch.stack([random_input(SMALL, rng) for _ in range(5)]))
        assert (out.probs == 0.5).all()

    def test_attention_rows_sum_to_one(self, small_model, rng):
        batch = Batch.stack([random_input(SMALL, rng) for _ in range(6)])
        out = forward(small_model, batch)
        valid = np.concatenate([np.ones((6, 1), bool), batch.text_mask, np.ones((6, SMALL.n_patches), bool)], 1)
        for att in out.attentions:
            rows = att.sum(-1)  # [B, H, S]
            np.testing.assert_allclose(rows[np.broadcast_to(valid[:, None, :], rows.shape)], 1.0, atol=1e-12)
            assert (att[np.broadcast_to(~valid[:, None, None, :], att.shape)] == 0).all()

    def test_padding_removed_equivalence(self, small_model, rng):
        inp = random_input(SMALL, rng, n_valid=3)
        short = FusionInput(inp.token_ids[:3], inp.text_mask[:3], inp.patches)
        a = forward(small_model, inp)
        b = forward(small_model, short)
        np.testing.assert_allclose(a.logits, b.logits, atol=1e-6)

    def test_masked_values_irrelevant(self, small_model, rng):
        inp = random_input(SMALL, rng, n_valid=2)
        other = FusionInput(inp.token_ids.copy(), inp.text_mask, inp.patches)
        other.token_ids[2:] = rng.integers(1, 12, size=SMALL.max_text_tokens - 2)
        np.testing.assert_allclose(forward(small_model, inp).logits, forward(small_model, other).logits, atol=1e-12)

    def test_batch_matches_single(self, small_model, rng):
        inputs = [random_input(SMALL, rng) for _ in range(4)]
        batched = forward(small_model, Batch.stack(inputs)).logits
        for i, inp in enumerate(inputs):
            np.testing.assert_allclose(batched[i], forward(small_model, inp).logits[0], atol=1e-12)

    def test_patch_permutation_invariance_without_positions(self, small_model, rng):
        m = small_model.copy()
        m.params["pos_patch"][:] = 0
        inp = random_input(SMALL, rng)
        perm = rng.permutation(SMALL.n_patches)
        shuffled = FusionInput(inp.token_ids, inp.text_mask, inp.patches[perm])
        np.testing.assert_allclose(forward(m, inp).logits, forward(m, shuffled).logits, atol=1e-6)
        # with positions the order matters
        assert not np.allclose(forward(small_model, inp).logits,
                               forward(small_model, shuffled).logits, atol=1e-6)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure(self, small_model, rng):
        m = small_model.copy()
        m.params["l0.w1"][0, 0] = np.inf
        with pytest.raises(NumericFailure, match="layer 0"):
            forward(m, random_input(SMALL, rng))

    def test_too_many_tokens(self, small_model, rng):
        inp = random_input(SMALL, rng)
        long = FusionInput(np.zeros(SMALL.max_text_tokens + 1, int), np.zeros(SMALL.max_text_tokens + 1, bool),
                           inp.patches)
        with pytest.raises(ValueError):
            forward(small_model, long)


class TestLoss:
    def test_zero_logits(self):
        assert bce_with_logits(np.zeros(6), np.eye(6)[2]) == pytest.approx(np.log(2), abs=1e-12)

    def test_saturated(self):
        z = np.full(6, -20.0)
        z[4] = 20.0
        assert bce_with_logits(z, np.eye(6)[4]) <= 1e-8

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.integers(0, 5))
    def test_logit_and_prob_paths_agree(self, z, k):
        z = np.array(z)
        y = np.eye(6)[k]
        assert abs(bce_with_logits(z, y) - bce_from_probs(fusion.sigmoid(z), y)) <= 1e-9


def central_difference(model, batch, Y, name, idx, h=1e-5):
    p = model.params[name]
    old = p[idx]
    p[idx] = old + h
    up = fusion.loss(model, batch, Y)
    p[idx] = old - h
    down = fusion.loss(model, batch, Y)
    p[idx] = old
    return (up - down) / (2 * h)


def gradient_check(model, batch, Y, rng, per_tensor=6):
    """Worst relative error over sampled coordinates of every parameter tensor."""
    _, grads = backward(model, batch, Y)
    worst = {}
    for name, g in grads.items():
        errs = []
        for flat in rng.choice(g.size, size=min(per_tensor, g.size), replace=False):
            idx = np.unravel_index(flat, g.shape)
            num = central_difference(model, batch, Y, name, idx)
            errs.append(abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-7))
        worst[name] = max(errs)
    return worst


class TestBackward:
    def test_gradcheck(self, small_model, rng):
        batch = Batch.stack([random_input(SMALL, rng) for _ in range(3)])
        Y = np.eye(6)[rng.integers(0, 6, size=3)]
        worst = gradient_check(small_model, batch, Y, rng)
        assert max(worst.values()) < 1e-4, worst

    def test_gradient_keys_and_shapes(self, small_model, rng):
        _, g = backward(small_model, random_input(SMALL, rng), np.eye(6)[0])
        assert g.keys() == small_model.params.keys()
        assert all(g[k].shape == v.shape for k, v in small_model.params.items())

    def test_pad_embedding_gradient_is_zero(self, small_model, rng):
        batch = Batch.stack([random_input(SMALL, rng, n_valid=2) for _ in range(3)])
        _, g = backward(small_model, batch, np.eye(6)[[0, 1, 2]])
        assert (g["tok_emb"][PAD_ID] == 0).all()
        unused = set(range(12)) - set(batch.token_ids[batch.text_mask].tolist())
        for t in unused:
            assert (g["tok_emb"][t] == 0).all()

    def test_saturated_gradient_vanishes(self, small_model, rng):
        m = small_model.copy()
        inp = random_input(SMALL, rng)
        m.params["head_w"][:] = 0
        m.params["head_b"][:] = -40.0
        m.params["head_b"][3] = 40.0
        _, g = backward(m, inp, np.eye(6)[3])
        assert np.sqrt(sum(float((v ** 2).sum()) for v in g.values())) <= 1e-6

    def test_dropout_changes_output_only_with_rng(self, rng):
        cfg = FusionConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_text_tokens=6, dropout=0.5)
        m = randomized(init_model(cfg, vocab_of(12)), rng)
        inp = random_input(cfg, rng)
        a, b = forward(m, inp).logits, forward(m, inp).logits
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(forward(m, inp, rng=np.random.default_rng(0)).logits, a)


def tiny_task(rng, n, cfg):
    """Label is carried by the first token, so a few epochs suffice."""
    inputs, labels = [], []
    for _ in range(n):
        y = int(rng.integers(0, 6))
        inp = random_input(cfg, rng, n_vocab=8, n_valid=3)
        inp.token_ids[0] = 2 + y
        inputs.append(inp)
        labels.append(y)
    return inputs, labels


class TestTrain:
    def test_zero_epochs_returns_init(self, rng):
        X, y = tiny_task(rng, 10, SMALL)
        st_ = fusion.train(X, y, X, y, SMALL, vocab_of(8), TrainHyper(epochs=0))
        init = init_model(SMALL, vocab_of(8))
        for k in init.params:
            np.testing.assert_array_equal(st_.model.params[k], init.params[k])
        assert st_.history == []

    def test_same_seed_identical(self, rng):
        X, y = tiny_task(rng, 24, SMALL)
        h = TrainHyper(epochs=2, batch=8, seed=4)
        a = fusion.train(X, y, X, y, SMALL, vocab_of(8), h)
        b = fusion.train(X, y, X, y, SMALL, vocab_of(8), h)
        assert a.history == b.history
        for k in a.model.params:
            np.testing.assert_array_equal(a.model.params[k], b.model.params[k])

    def test_learns_token_rule(self, rng):
        X, y = tiny_task(rng, 96, SMALL)
        st_ = fusion.train(X, y, X, y, SMALL, vocab_of(8), TrainHyper(epochs=30, lr=1e-2, batch=16))
        assert st_.best_val_accuracy >= 0.9
        assert st_.history[-1]["train_loss"] < st_.history[0]["train_loss"]

    @pytest.mark.slow
    def test_separable_benchmark(self, tmp_path):
        from emofuse import pipeline
        from emofuse.ingest import SyntheticSpec, make_synthetic_dataset
        recs = make_synthetic_dataset(SyntheticSpec(600, seed=7, text_informativeness=0.9,
                                                    audio_informativeness=0.9), tmp_path)
        st_ = pipeline.train_fusion_on_manifest(recs, tmp_path, FusionConfig(seed=7), TrainHyper(epochs=10, seed=7))
        assert st_.best_val_accuracy >= 0.85

    def test_empty_split_rejected(self, rng):
        X, y = tiny_task(rng, 4, SMALL)
        with pytest.raises(ValueError):
            fusion.train(X, y, [], [], SMALL, vocab_of(8))


class TestPredict:
    def test_zero_head_uniform(self, small_model, rng):
        m = small_model.copy()
        m.params["head_w"][:] = 0
        m.params["head_b"][:] = 0
        sm, raw = fusion.predict(m, ["a", "b"], [random_input(SMALL, rng) for _ in range(2)])
        assert sm.modality is Modality.fused
        np.testing.assert_allclose(sm.values, 1 / 6, atol=1e-15)
        assert (raw == 0.5).all()

    def test_renormalization_preserves_argmax(self, small_model, rng):
        inputs = [random_input(SMALL, rng) for _ in range(20)]
        sm, raw = fusion.predict(small_model, [str(i) for i in range(20)], inputs)
        np.testing.assert_array_equal(sm.predictions(), raw.argmax(axis=0))
        np.testing.assert_allclose(sm.values.sum(axis=0), 1.0, atol=1e-12)
        for i, inp in enumerate(inputs):
            p = forward(small_model, inp).probs[0]
            np.testing.assert_allclose(sm.values[:, i], p / p.sum(), atol=1e-12)

    def test_empty(self, small_model):
        sm, raw = fusion.predict(small_model, [], [])
        assert sm.values.shape == (6, 0)


def test_checkpoint_round_trip(small_model, rng, tmp_path):
    fusion.save_checkpoint(small_model, tmp_path / "ck", step=7, val_accuracy=0.5)
    back = fusion.load_checkpoint(tmp_path / "ck")
    assert back.config == small_model.config and back.vocab == small_model.vocab
    for k, v in small_model.params.items():
        np.testing.assert_array_equal(back.params[k], v)
    inp = random_input(SMALL, rng)
    np.testing.assert_array_equal(forward(back, inp).logits, forward(small_model, inp).logits)
