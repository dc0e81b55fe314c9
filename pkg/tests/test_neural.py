"""Tests for the autodiff engine and the neural transition scorer."""

import os
import tempfile

import numpy as np
import pytest

from disconer import autodiff as ad
from disconer.corpus import Fragment, Mention, Sentence
from disconer.neural import (ScorerConfig, ScorerParams, Vocab,
                             action_distribution, attend, compose,
                             finite_diff_check, init_params, load_checkpoint,
                             load_external_vectors, predict, save_checkpoint,
                             sentence_loss, sgd_step, stack_pop, stack_push,
                             token_reps, train)
from disconer.synth import make_corpus
from disconer.transitions import oracle


# ---------------------------------------------------------------------------
# Autodiff primitives
# ---------------------------------------------------------------------------

def _num_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = f()
        x[idx] = orig - eps
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2 * eps)
    return g


def test_lstm_cell_gradients():
    rng = np.random.default_rng(0)
    H, D = 4, 3
    W = ad.leaf(rng.normal(size=(4 * H, D + H)))
    b = ad.leaf(rng.normal(size=4 * H))
    x = ad.leaf(rng.normal(size=D))
    h = ad.leaf(rng.normal(size=H))
    c = ad.leaf(rng.normal(size=H))
    v = rng.normal(size=H)

    def forward():
        tape = ad.Tape()
        h2, _ = ad.lstm_cell(tape, W, b, x, h, c)
        return float(v @ h2.data)

    tape = ad.Tape()
    h2, _ = ad.lstm_cell(tape, W, b, x, h, c)
    loss = ad.mul(tape, h2, ad.leaf(v))
    total = ad.add_n(tape, [ad.row(tape, loss, i) for i in range(H)])
    ad.backward(tape, total)
    for t, name in ((W, "W"), (b, "b"), (x, "x"), (h, "h"), (c, "c")):
        num = _num_grad(forward, t.data)
        assert np.allclose(t.grad, num, atol=1e-6), name


def test_char_cnn_gradients():
    rng = np.random.default_rng(1)
    filters = ad.leaf(rng.normal(size=(3, 2 * 2)))
    bias = ad.leaf(rng.normal(size=3))
    emb = ad.leaf(rng.normal(size=(5, 2)))
    v = rng.normal(size=3)

    def forward():
        tape = ad.Tape()
        out = ad.char_cnn(tape, filters, bias, emb)
        return float(v @ out.data)

    tape = ad.Tape()
    out = ad.char_cnn(tape, filters, bias, emb)
    s = ad.mul(tape, out, ad.leaf(v))
    total = ad.add_n(tape, [ad.row(tape, s, i) for i in range(3)])
    ad.backward(tape, total)
    for t in (filters, bias, emb):
        assert np.allclose(t.grad, _num_grad(forward, t.data), atol=1e-6)


def test_char_cnn_pads_short_words():
    tape = ad.Tape()
    filters = ad.leaf(np.ones((2, 3 * 2)))
    bias = ad.leaf(np.zeros(2))
    emb = ad.leaf(np.ones((1, 2)))  # shorter than window 3
    out = ad.char_cnn(tape, filters, bias, emb)
    assert out.data.shape == (2,)


def test_attend_weights_and_empty_buffer():
    rng = np.random.default_rng(2)
    q = rng.normal(size=4)
    W = rng.normal(size=(4, 3))
    B = rng.normal(size=(5, 3))
    w = ad.attention_weights(q, W, B)
    assert w.shape == (5,)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    tape = ad.Tape()
    empty = ad.attend(tape, ad.leaf(q), ad.leaf(W), ad.leaf(np.zeros((0, 3))))
    assert np.array_equal(empty.data, np.zeros(3))


def test_attend_single_row_returns_row():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(1, 3))
    tape = ad.Tape()
    out = ad.attend(tape, ad.leaf(rng.normal(size=4)),
                    ad.leaf(rng.normal(size=(4, 3))), ad.leaf(B))
    assert np.allclose(out.data, B[0])


def test_masked_softmax_properties():
    logits = np.array([1.0, 5.0, 2.0, -1.0])
    dist = action_distribution(logits, [0, 2])
    assert dist[1] == 0.0 and dist[3] == 0.0
    assert dist.sum() == pytest.approx(1.0, abs=1e-12)
    only = action_distribution(logits, [3])
    assert only[3] == 1.0


def test_masked_nll_gradient():
    rng = np.random.default_rng(4)
    logits = ad.leaf(rng.normal(size=6))
    valid = [0, 2, 5]

    def forward():
        tape = ad.Tape()
        return float(ad.masked_nll(tape, logits, valid, 1).data)

    tape = ad.Tape()
    loss = ad.masked_nll(tape, logits, valid, 1)
    ad.backward(tape, loss)
    assert np.allclose(logits.grad, _num_grad(forward, logits.data), atol=1e-6)
    assert logits.grad[1] == 0.0 and logits.grad[3] == 0.0


# ---------------------------------------------------------------------------
# Scorer components
# ---------------------------------------------------------------------------

CORPUS = make_corpus(20, seed=6)
VOCAB = Vocab.build(CORPUS)
CONFIG = ScorerConfig(word_dim=6, char_dim=4, char_filters=4, hidden_dim=5,
                      stack_dim=5, action_dim=4)


def test_config_validation():
    with pytest.raises(ValueError):
        ScorerConfig(char_cnn_window=2)
    with pytest.raises(ValueError):
        ScorerConfig(hidden_dim=0)
    cfg = ScorerConfig(hidden_dim=8, external_vec_dim=3)
    assert cfg.rep_dim == 19
    assert cfg.feature_dim == 3 * cfg.stack_dim + 3 * 19 + cfg.action_dim


def test_vocab_unk_handling():
    assert VOCAB.word_index("never-seen-token") == VOCAB.word_index("<unk>")
    idx = VOCAB.char_indices("mé")
    assert len(idx) == 2


def test_init_params_deterministic_and_bounded():
    p1 = init_params(CONFIG, VOCAB)
    p2 = init_params(CONFIG, VOCAB)
    for name in p1.names():
        assert np.array_equal(p1.t[name].data, p2.t[name].data)
        shape = p1.t[name].data.shape
        fan = sum(shape) if len(shape) == 2 else 2 * shape[0]
        assert np.abs(p1.t[name].data).max() <= np.sqrt(6.0 / fan)


def test_token_reps_shapes():
    params = init_params(CONFIG, VOCAB)
    s = CORPUS.sentences[0]
    tape = ad.Tape()
    vecs, matrix = token_reps(s, None, params, VOCAB, CONFIG, tape)
    assert len(vecs) == len(s.tokens)
    assert all(v.data.shape == (CONFIG.rep_dim,) for v in vecs)
    assert matrix.data.shape == (len(s.tokens), CONFIG.rep_dim)


def test_token_reps_external_vec_shape_check():
    cfg = ScorerConfig(word_dim=6, char_dim=4, char_filters=4, hidden_dim=5,
                       stack_dim=5, action_dim=4, external_vec_dim=2)
    params = init_params(cfg, VOCAB)
    s = CORPUS.sentences[0]
    with pytest.raises(ValueError):
        token_reps(s, np.zeros((1, 2)), params, VOCAB, cfg, ad.Tape())
    vecs, _ = token_reps(s, np.zeros((len(s.tokens), 2)), params, VOCAB, cfg,
                         ad.Tape())
    assert vecs[0].data.shape == (cfg.rep_dim,)


def test_stack_push_pop_exact_restore():
    params = init_params(CONFIG, VOCAB)
    tape = ad.Tape()
    v1 = ad.leaf(np.ones(CONFIG.stack_dim))
    v2 = ad.leaf(np.full(CONFIG.stack_dim, 0.5))
    stack = stack_push(tape, params, CONFIG, (), v1)
    before = stack[-1]
    stack2 = stack_push(tape, params, CONFIG, stack, v2)
    restored = stack_pop(stack2)
    assert restored[-1] is before  # bitwise: the same entry object
    with pytest.raises(ValueError):
        stack_pop(())


def test_compose_shape():
    params = init_params(CONFIG, VOCAB)
    tape = ad.Tape()
    out = compose(tape, params, ad.leaf(np.ones(CONFIG.stack_dim)),
                  ad.leaf(np.zeros(CONFIG.stack_dim)))
    assert out.data.shape == (CONFIG.stack_dim,)


def test_sentence_loss_positive_and_finite():
    params = init_params(CONFIG, VOCAB)
    s = next(s for s in CORPUS if s.mentions)
    actions, _ = oracle(s)
    loss, tape = sentence_loss(s, actions, params, VOCAB, CONFIG)
    assert float(loss.data) > 0.0
    ad.backward(tape, loss)
    g = params.gradients()
    assert any(v is not None and np.abs(v).sum() > 0 for v in g.values())


def test_finite_diff_small():
    params = init_params(CONFIG, VOCAB)
    s = next(s for s in CORPUS if 0 < len(s.tokens) <= 6)
    err = finite_diff_check(params, s, VOCAB, CONFIG, n_coords=60)
    assert err < 1e-4


def test_sgd_step_updates_and_clears():
    params = init_params(CONFIG, VOCAB)
    s = next(s for s in CORPUS if s.mentions)
    actions, _ = oracle(s)
    loss, tape = sentence_loss(s, actions, params, VOCAB, CONFIG)
    ad.backward(tape, loss)
    before = params.t["out_W"].data.copy()
    sgd_step(params, 0.1)
    assert not np.array_equal(before, params.t["out_W"].data)
    assert all(t.grad is None for t in params.t.values())


def test_sgd_step_rejects_non_finite():
    params = init_params(CONFIG, VOCAB)
    params.t["out_b"].grad = np.full_like(params.t["out_b"].data, np.nan)
    with pytest.raises(FloatingPointError, match="out_b"):
        sgd_step(params, 0.1)


def test_predict_returns_valid_mentions():
    params = init_params(CONFIG, VOCAB)
    for s in list(CORPUS)[:5]:
        pred = predict(s, params, VOCAB, CONFIG)
        for m in pred:
            assert m.fragments[-1].end <= len(s.tokens)


def test_train_determinism_and_loss_decrease():
    config = ScorerConfig(word_dim=6, char_dim=4, char_filters=4, hidden_dim=5,
                          stack_dim=5, action_dim=4, epochs=5, seed=3)
    small = make_corpus(8, seed=10)
    p1, v1, i1 = train(small, config)
    p2, _, i2 = train(small, config)
    for name in p1.names():
        assert np.array_equal(p1.t[name].data, p2.t[name].data)
    assert i1["epoch_losses"] == i2["epoch_losses"]
    assert i1["epoch_losses"][-1] < i1["epoch_losses"][0]


def test_train_skips_nested_and_counts():
    nested = Sentence(("a", "b", "c"),
                      (Mention("T", (Fragment(0, 3),)),
                       Mention("T", (Fragment(1, 2),))))
    ok = Sentence(("x", "y"), (Mention("T", (Fragment(0, 1),)),))
    from disconer.corpus import Corpus
    config = ScorerConfig(word_dim=4, char_dim=3, char_filters=3, hidden_dim=4,
                          stack_dim=4, action_dim=3, epochs=1)
    _, _, info = train(Corpus((nested, ok)), config)
    assert info["skipped_nested"] == 1


def test_checkpoint_round_trip():
    params = init_params(CONFIG, VOCAB)
    path = tempfile.mktemp()
    try:
        save_checkpoint(path, params, CONFIG, VOCAB)
        loaded, config, vocab = load_checkpoint(path)
        assert config == CONFIG and vocab == VOCAB
        for name in params.names():
            assert np.array_equal(params.t[name].data, loaded.t[name].data)
    finally:
        os.remove(path)


def test_checkpoint_rejects_bad_magic():
    path = tempfile.mktemp()
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\x00" * 16)
    try:
        with pytest.raises(Exception, match="magic"):
            load_checkpoint(path)
    finally:
        os.remove(path)


def test_load_external_vectors():
    text = "1.0 2.0\n3.0 4.0\n\n5.0 6.0\n"
    mats = load_external_vectors(text)
    assert len(mats) == 2
    assert mats[0].shape == (2, 2) and mats[1].shape == (1, 2)
    assert mats[1][0, 1] == 6.0
