import numpy as np
import pytest

from intentdial import encoder as E
from intentdial import tensor as T
from intentdial.gradcheck import check_grads


@pytest.fixture
def vocab():
    return E.Vocabulary.from_tokens(["credit", "limit", "card", "pay", "how"])


def test_tokenize_known(vocab):
    ids = E.tokenize("Credit Limit", vocab)
    assert ids == [vocab.id("credit"), vocab.id("limit")]
    assert vocab.unk_id not in ids


def test_tokenize_oov(vocab):
    assert E.tokenize("zzzunknownzzz", vocab) == [vocab.unk_id]


def test_tokenize_empty(vocab):
    with pytest.raises(E.EmptyUtterance):
        E.tokenize("   !!!", vocab)


def test_tokenize_roundtrip(vocab):
    ids = E.tokenize("how to pay credit card", vocab)
    text = " ".join(vocab.token(i) for i in ids)
    assert E.tokenize(text, vocab) == ids


def test_vocab_save_load(tmp_path, vocab):
    p = str(tmp_path / "vocab.json")
    vocab.save(p)
    v2 = E.Vocabulary.load(p)
    assert len(v2) == len(vocab)
    assert v2.id("credit") == vocab.id("credit")


def test_vocab_reserved_order():
    with pytest.raises(ValueError):
        E.Vocabulary(["a", "b"])


def _store(vocab_size=8, cfg=None, seed=0):
    cfg = cfg or E.EncoderConfig(d_token=4, d_gru=3)
    store = T.ParamStore()
    E.init_encoder_params(store, vocab_size, cfg, np.random.default_rng(seed))
    return store, cfg


def test_sentence_dimension():
    store, _ = _store(cfg=E.EncoderConfig(d_token=8, d_gru=16))
    cfg = E.EncoderConfig(d_token=8, d_gru=16)
    store = T.ParamStore()
    E.init_encoder_params(store, 10, cfg, np.random.default_rng(0))
    out = E.encode_sentence([2, 3, 4], store, cfg)
    assert out.data.shape == (32,)


def test_sentence_single_token_symmetry():
    # with shared forward/backward weights, a single token gives equal halves
    cfg = E.EncoderConfig(d_token=4, d_gru=3)
    store = T.ParamStore()
    rng = np.random.default_rng(1)
    E.init_encoder_params(store, 8, cfg, rng)
    for k in ("w_zr", "u_zr", "b_zr", "w_h", "u_h", "b_h"):
        store[f"enc/gru_bwd/{k}"].data[...] = store[f"enc/gru_fwd/{k}"].data
    out = E.encode_sentence([5], store, cfg).data
    assert np.array_equal(out[:3], out[3:])


def test_sentence_reversal_swaps_halves():
    cfg = E.EncoderConfig(d_token=4, d_gru=3)
    store = T.ParamStore()
    E.init_encoder_params(store, 8, cfg, np.random.default_rng(2))
    for k in ("w_zr", "u_zr", "b_zr", "w_h", "u_h", "b_h"):
        store[f"enc/gru_bwd/{k}"].data[...] = store[f"enc/gru_fwd/{k}"].data
    fwd = E.encode_sentence([2, 3, 4], store, cfg).data
    rev = E.encode_sentence([4, 3, 2], store, cfg).data
    assert np.allclose(fwd[:3], rev[3:])
    assert np.allclose(fwd[3:], rev[:3])


def test_sentence_empty():
    store, cfg = _store()
    with pytest.raises(E.EmptyUtterance):
        E.encode_sentence([], store, cfg)


def test_context_identity_projections_singleton():
    cfg = E.EncoderConfig(d_token=4, d_gru=2)
    store = T.ParamStore()
    E.init_encoder_params(store, 8, cfg, np.random.default_rng(3))
    for name in ("enc/w_q", "enc/w_k", "enc/w_v"):
        store[name].data[...] = np.eye(cfg.d_ctx)
    u1 = E.encode_sentence([2, 5], store, cfg).data
    (c1,) = E.encode_context([[2, 5]], store, cfg)
    assert np.allclose(c1.data, u1, atol=1e-12)


def test_context_causality_bit_exact():
    store, cfg = _store(seed=4)
    base = E.encode_context([[2, 3], [4], [5, 6]], store, cfg)
    perturbed = E.encode_context([[2, 3], [4], [7, 2, 6]], store, cfg)
    for i in range(2):
        assert base[i].data.tobytes() == perturbed[i].data.tobytes()
    assert base[2].data.tobytes() != perturbed[2].data.tobytes()


def test_context_shapes():
    store, cfg = _store(seed=5)
    ctx = E.encode_context([[2], [3, 4]], store, cfg)
    assert len(ctx) == 2
    assert all(c.data.shape == (cfg.d_ctx,) for c in ctx)


def test_context_two_turn_formula_oracle():
    # 2-turn case against an explicit softmax(QK^T/sqrt(d))V computation
    cfg = E.EncoderConfig(d_token=3, d_gru=1)
    store = T.ParamStore()
    E.init_encoder_params(store, 6, cfg, np.random.default_rng(6))
    turns = [[2, 3], [4]]
    u = np.stack([E.encode_sentence(t, store, cfg).data for t in turns])
    wq, wk, wv = (store[f"enc/w_{n}"].data for n in "qkv")
    q, k, v = u @ wq.T, u @ wk.T, u @ wv.T
    d = np.sqrt(cfg.d_ctx)
    expected = [v[0]]
    logits = k @ q[1] / d
    e = np.exp(logits - logits.max())
    expected.append((e / e.sum()) @ v)
    ctx = E.encode_context(turns, store, cfg)
    assert np.max(np.abs(ctx[0].data - expected[0])) < 1e-9
    assert np.max(np.abs(ctx[1].data - expected[1])) < 1e-9


def test_context_gradients_match_finite_differences():
    cfg = E.EncoderConfig(d_token=2, d_gru=2)
    store = T.ParamStore()
    E.init_encoder_params(store, 5, cfg, np.random.default_rng(7))
    w = np.random.default_rng(8).normal(size=cfg.d_ctx)

    def loss(st):
        ctx = E.encode_context([[2, 3], [4]], st, cfg)
        return T.sum_list([T.matmul(c, T.Tensor(w)) for c in ctx])

    assert check_grads(loss, store) < 1e-4


def test_determinism():
    store, cfg = _store(seed=9)
    a = E.encode_context([[2, 3], [4]], store, cfg)
    b = E.encode_context([[2, 3], [4]], store, cfg)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))
