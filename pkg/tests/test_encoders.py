import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from lsa_rec.encoders import (EmbeddingTables, GatedFusion, InterestEncoder, canonical_set_order,
                              encode_sequence, final_representation, gated_fusion)
from lsa_rec.graph import NodeId
from lsa_rec.selection import InterestSequence

torch.set_default_dtype(torch.float64)


def _np(t):
    return t.detach().numpy().astype(np.float64)


def _layer_norm(x, g, b, eps=1e-5):
    mu = x.mean()
    var = ((x - mu) ** 2).mean()
    return (x - mu) / np.sqrt(var + eps) * g + b


def test_single_token_hand_trace():
    """d=2, H=1, L=1, cold start: attention over one token has weight 1 on itself."""
    torch.manual_seed(11)
    enc = InterestEncoder(2, n_layers=1, n_heads=1)
    with torch.no_grad():
        for p in enc.parameters():
            p.uniform_(-1, 1)
    anchor = torch.tensor([[0.3, -0.8]])
    out = enc(anchor, torch.zeros(1, 3, 2), torch.zeros(1, 3, dtype=torch.bool))[0]

    layer = enc.layers[0]
    x = np.array([0.3, -0.8])
    h = _layer_norm(x, _np(layer.norm1.weight), _np(layer.norm1.bias))
    v = _np(layer.attn.value.weight) @ h
    x = x + _np(layer.attn.out.weight) @ v + _np(layer.attn.out.bias)
    f = _layer_norm(x, _np(layer.norm2.weight), _np(layer.norm2.bias))
    W1, b1 = _np(layer.ffn[0].weight), _np(layer.ffn[0].bias)
    W2, b2 = _np(layer.ffn[2].weight), _np(layer.ffn[2].bias)
    x = x + W2 @ np.maximum(W1 @ f + b1, 0) + b2
    want = _layer_norm(x, _np(enc.final_norm.weight), _np(enc.final_norm.bias))
    np.testing.assert_allclose(out.detach().numpy(), want, rtol=1e-12, atol=1e-12)


def test_gatv2_score_hand_trace():
    """score(i, j) = a . LeakyReLU(W [h_i || h_j]) on a 2-token, d=2, H=1 input."""
    torch.manual_seed(0)
    enc = InterestEncoder(2, n_layers=1, n_heads=1)
    attn = enc.layers[0].attn
    x = torch.tensor([[[0.5, -1.0], [2.0, 0.25]]])
    w = attn.scores(x, torch.ones(1, 2, dtype=torch.bool))[0, 0].detach().numpy()
    W, a = _np(attn.W_att[0]), _np(attn.att[0])
    leaky = lambda z: np.where(z > 0, z, 0.2 * z)
    xs = x[0].numpy()
    logits = np.array([[a @ leaky(W @ np.concatenate([xs[i], xs[j]])) for j in range(2)] for i in range(2)])
    want = np.exp(logits) / np.exp(logits).sum(1, keepdims=True)
    np.testing.assert_allclose(w, want, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.booleans())
def test_attention_rows_normalised_and_masked(seed, S, time_aware):
    torch.manual_seed(seed)
    enc = InterestEncoder(4, n_layers=2, n_heads=2, max_len=S, time_aware=time_aware)
    mask = torch.rand(3, S) < 0.5
    buckets = torch.randint(0, 16, (3, S)) if time_aware else None
    out, attn = enc(torch.randn(3, 4), torch.randn(3, S, 4), mask, buckets, return_attention=True)
    assert torch.isfinite(out).all()
    full = torch.cat([torch.ones(3, 1, dtype=torch.bool), mask], 1)
    for w in attn:
        assert torch.allclose(w.sum(-1), torch.ones_like(w.sum(-1)), atol=1e-6)
        assert (w.masked_select(~full[:, None, None, :].expand_as(w)) == 0).all()


def test_all_masked_attends_to_self():
    enc = InterestEncoder(4, n_layers=1, n_heads=2)
    _, attn = enc(torch.randn(2, 4), torch.randn(2, 5, 4), torch.zeros(2, 5, dtype=torch.bool),
                  return_attention=True)
    assert torch.equal(attn[0][:, :, 0, 0], torch.ones(2, 2))


def test_output_shape():
    enc = InterestEncoder(8, n_layers=2, n_heads=2)
    assert enc(torch.randn(5, 8), torch.randn(5, 7, 8), torch.ones(5, 7, dtype=torch.bool)).shape == (5, 8)


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(6))), st.integers(0, 3))
def test_long_term_permutation_invariance_bitwise(perm, n_pad):
    torch.manual_seed(5)
    tables = EmbeddingTables(2, 2, 10, 4)
    enc = InterestEncoder(4, n_layers=2, n_heads=2)
    ids = [3, 7, 1, 9, 4, 0]
    pad = (0,) * n_pad
    a = InterestSequence(NodeId("user", 1), tuple(ids) + pad, (True,) * 6 + (False,) * n_pad, "long")
    b = InterestSequence(NodeId("user", 1), tuple(ids[k] for k in perm) + pad, a.mask, "long")
    assert torch.equal(encode_sequence(a, tables, enc), encode_sequence(b, tables, enc))


def test_short_term_encoding_depends_on_order():
    torch.manual_seed(5)
    tables = EmbeddingTables(1, 1, 10, 4)
    enc = InterestEncoder(4, n_layers=1, n_heads=2, max_len=3, time_aware=True)
    node = NodeId("item", 0)
    a = InterestSequence(node, (1, 2, 3), (True,) * 3, "short", (90, 50, 10))
    b = InterestSequence(node, (3, 2, 1), (True,) * 3, "short", (90, 50, 10))
    assert not torch.allclose(encode_sequence(a, tables, enc, 100), encode_sequence(b, tables, enc, 100))
    with pytest.raises(ValueError):
        encode_sequence(a, tables, enc)


def test_canonical_order():
    ids = torch.tensor([[5, 2, 9, 0]])
    mask = torch.tensor([[True, True, False, True]])
    got, m = canonical_set_order(ids, mask)
    assert got.tolist() == [[0, 2, 5, 0]] and m.tolist() == [[True, True, True, False]]


# ---- gate and final representation ------------------------------------------

def _gate_d2():
    g = GatedFusion(2)
    with torch.no_grad():
        g.W_l.weight.copy_(torch.tensor([[1.0, 2.0], [0.0, -1.0]]))
        g.W_s.weight.copy_(torch.tensor([[0.5, 0.0], [1.0, 1.0]]))
        g.gate.weight.copy_(torch.tensor([[1.0, 0.0, -1.0, 0.0], [0.0, 0.5, 0.0, 0.5]]))
        g.gate.bias.copy_(torch.tensor([0.1, -0.2]))
    return g


def test_gate_hand_computed_d2():
    g = _gate_d2()
    el, es = torch.tensor([1.0, -1.0]), torch.tensor([2.0, 4.0])
    lp = np.array([1 * 1 + 2 * -1, 0 * 1 + -1 * -1])        # [-1, 1]
    sp = np.array([0.5 * 2, 2 + 4])                          # [1, 6]
    z = np.array([lp[0] - sp[0] + 0.1, 0.5 * lp[1] + 0.5 * sp[1] - 0.2])
    gate = 1 / (1 + np.exp(-z))
    want = gate * lp + (1 - gate) * sp + lp
    np.testing.assert_allclose(gated_fusion(el, es, g).detach().numpy(), want, rtol=1e-12)


@pytest.mark.parametrize("bias,expect", [(1e4, "2l"), (-1e4, "s+l")])
def test_gate_extremes(bias, expect):
    torch.manual_seed(1)
    g = GatedFusion(3)
    with torch.no_grad():
        g.gate.weight.zero_()
        g.gate.bias.fill_(bias)
    el, es = torch.randn(4, 3), torch.randn(4, 3)
    lp, sp = g.W_l(el), g.W_s(es)
    out = g(el, es)
    want = 2 * lp if expect == "2l" else sp + lp
    assert torch.allclose(out, want, rtol=0, atol=1e-14)


@given(st.integers(0, 1000))
def test_gate_values_in_open_interval(seed):
    torch.manual_seed(seed)
    g = GatedFusion(5)
    vals = g.gate_values(torch.randn(7, 5), torch.randn(7, 5))
    assert ((vals > 0) & (vals < 1)).all()


def test_fusion_modes():
    torch.manual_seed(2)
    g = GatedFusion(3)
    el, es = torch.randn(2, 3), torch.randn(2, 3)
    assert torch.equal(g(el, es, "long"), g.W_l(el))
    assert torch.equal(g(el, None, "long"), g.W_l(el))
    assert torch.equal(g(None, es, "short"), g.W_s(es))
    assert torch.allclose(g(el, es, "average"), 0.5 * (g.W_l(el) + g.W_s(es)))


def test_final_representation_d3():
    g = GatedFusion(3)
    W3 = torch.tensor([[1.0, 0.0, 2.0], [-1.0, 1.0, 0.0], [0.5, 0.5, 0.5]])
    b = torch.tensor([0.0, -3.0, 1.0])
    with torch.no_grad():
        g.pref.weight.copy_(W3)
        g.pref.bias.copy_(b)
    y, fused = torch.tensor([1.0, 2.0, -1.0]), torch.tensor([9.0, 8.0, 7.0])
    # Linear computes W3 @ y + b: [1-2, -1+2-3, 0.5+1-0.5+1]
    want = [0.0, 0.0, 2.0, 9.0, 8.0, 7.0]
    assert final_representation(y, fused, g).tolist() == pytest.approx(want)


def test_final_representation_relu_and_identity():
    g = GatedFusion(4)
    with torch.no_grad():
        g.pref.weight.copy_(torch.eye(4))
        g.pref.bias.zero_()
    y = torch.tensor([0.5, 0.0, 2.0, 1.0])
    assert torch.equal(g.final(y, torch.zeros(4))[:4], y)
    assert torch.equal(g.final(-y, torch.zeros(4))[:4], torch.zeros(4))


def test_item_path_mirrors_user_path():
    torch.manual_seed(4)
    tables = EmbeddingTables(3, 3, 6, 4)
    enc = InterestEncoder(4, 1, 2)
    for kind in ("user", "item"):
        seq = InterestSequence(NodeId(kind, 2), (1, 4), (True, True), "long")
        assert encode_sequence(seq, tables, enc).shape == (4,)


def test_embedding_init_range():
    t = EmbeddingTables(20, 20, 20, 16)
    for p in t.parameters():
        assert p.abs().max() <= 0.25
