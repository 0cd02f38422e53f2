import numpy as np
import pytest

from conftest import random_adjacency, random_sequence, tiny_model_config
from oracles import central_difference
from seegraph.autodiff import Tape, Tensor, backward, constant, mul, sum_
from seegraph.errors import ShapeError
from seegraph.graphs import DynamicGraphSequence
from seegraph.mask import SparsityPrior
from seegraph.model import (GatLayerParams, Prediction, SeeGraphModel, classify,
                            cross_entropy, gat_layer, gate_adjacency,
                            graph_pool, total_loss)
from seegraph.params import ParameterStore
from seegraph.training import mask_noise_block

RNG = np.random.default_rng(8)


def make_sequence(n_windows=3, n_channels=4, dim=5):
    x, adj = random_sequence(RNG, n_windows, n_channels, dim)
    return DynamicGraphSequence(node_features=x, adjacency=adj, band="broadband")


def tiny_model(n_channels=4, feature_dim=5, n_classes=2, **overrides):
    config = tiny_model_config(**overrides)
    return SeeGraphModel(config, feature_dim, n_channels, n_classes)


# ---------------------------------------------------------------------------
# gating
# ---------------------------------------------------------------------------

def test_gate_identity_and_suppression():
    abar = constant(random_adjacency(RNG, 4))
    ones = np.ones((4, 4)) - np.eye(4)
    gated = gate_adjacency(constant(ones), abar)
    np.testing.assert_allclose(gated.data, abar.data, atol=1e-15)
    zeros = gate_adjacency(constant(np.zeros((4, 4))), abar)
    np.testing.assert_array_equal(zeros.data, np.zeros((4, 4)))


def test_gate_elementwise_product_and_shape():
    m = constant(np.full((2, 2), 0.5))
    a = constant(np.array([[0.0, 0.8], [0.8, 0.0]]))
    assert gate_adjacency(m, a).data[0, 1] == pytest.approx(0.4)
    with pytest.raises(ShapeError):
        gate_adjacency(constant(np.zeros((2, 2))), constant(np.zeros((3, 3))))


def test_gate_never_exceeds_fused_weights():
    msym = RNG.uniform(0, 1, (5, 5))
    msym = 0.5 * (msym + msym.T)
    np.fill_diagonal(msym, 0.0)
    abar = random_adjacency(RNG, 5)
    gated = gate_adjacency(constant(msym), constant(abar)).data
    assert np.all(gated <= abar + 1e-15)


# ---------------------------------------------------------------------------
# GAT layer
# ---------------------------------------------------------------------------

def make_gat(in_dim=5, out_dim=6, seed=4):
    store = ParameterStore()
    return store, GatLayerParams.create(store, 0, in_dim, out_dim, seed)


def test_isolated_node_reduces_to_self_message():
    store, params = make_gat()
    h = RNG.uniform(-1, 1, (3, 5))
    adj = np.zeros((3, 3))
    out = gat_layer(constant(h), constant(adj), params).data
    wh = h @ params.weight.data.T
    expected = np.where(wh > 0, wh, np.expm1(np.minimum(wh, 0)))
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_equal_logits_give_uniform_attention():
    store, params = make_gat(out_dim=4)
    params.attn.data[...] = 0.0  # all pair logits collapse to 0
    h = RNG.uniform(-1, 1, (2, 5))
    adj = np.array([[0.0, 0.5], [0.5, 0.0]])
    out = gat_layer(constant(h), constant(adj), params).data
    wh = h @ params.weight.data.T
    # alpha = 0.5 everywhere; self gate 1, neighbor gate 0.5
    merged = 0.5 * 1.0 * wh + 0.5 * 0.5 * wh[::-1]
    expected = np.where(merged > 0, merged, np.expm1(np.minimum(merged, 0)))
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_attention_rows_sum_to_one_over_neighborhoods():
    store, params = make_gat()
    h = RNG.uniform(-1, 1, (6, 5))
    adj = random_adjacency(RNG, 6)
    adj[0, :] = 0.0
    adj[:, 0] = 0.0  # isolate node 0
    wh = h @ params.weight.data.T
    a = params.attn.data.ravel()
    src = wh @ a[:6]
    dst = wh @ a[6:]
    logits = src[:, None] + dst[None, :]
    logits = np.where(logits > 0, logits, 0.2 * logits)
    neigh = (adj > 0) | np.eye(6, dtype=bool)
    weights = np.where(neigh, np.exp(logits - logits.max(axis=1, keepdims=True)), 0.0)
    weights /= weights.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(weights.sum(axis=1), np.ones(6), atol=1e-12)
    assert weights[0, 1:].sum() == 0.0  # isolated node attends only to itself


def test_gat_gradients_match_finite_differences():
    store, params = make_gat(in_dim=4, out_dim=4)
    h = RNG.uniform(-1, 1, (4, 4))
    adj = random_adjacency(RNG, 4)
    probe = RNG.uniform(0.5, 1.5, (4, 4))

    def objective():
        out = gat_layer(constant(h), constant(adj), params)
        return sum_(mul(out, constant(probe)))

    for tensor in (params.weight, params.attn):
        with Tape() as tape:
            loss = objective()
        analytic = backward(tape, loss).require(tensor)

        def fn(values, tensor=tensor):
            keep = tensor.data.copy()
            tensor.data[...] = values
            result = float(objective().data)
            tensor.data[...] = keep
            return result

        fd = central_difference(fn, tensor.data.copy(), 1e-5)
        assert np.abs(analytic - fd).max() / max(1.0, np.abs(fd).max()) < 1e-4


# ---------------------------------------------------------------------------
# pooling / classification / loss
# ---------------------------------------------------------------------------

def test_pool_examples():
    row = RNG.uniform(-1, 1, 6)
    np.testing.assert_allclose(graph_pool(constant(np.tile(row, (4, 1)))).data,
                               row, atol=1e-14)
    np.testing.assert_allclose(graph_pool(constant(row[None, :])).data, row)
    v = RNG.uniform(-1, 1, 6)
    np.testing.assert_allclose(
        graph_pool(constant(np.stack([v, -v]))).data, np.zeros(6), atol=1e-15)


def test_classify_uniform_with_zero_head():
    head_w = constant(np.zeros((6, 3)))
    head_b = constant(np.zeros((1, 3)))
    pred = classify(constant(RNG.uniform(-1, 1, 6)), head_w, head_b)
    np.testing.assert_allclose(pred.probabilities.data, np.full(3, 1 / 3))


def test_classify_argmax_consistency_and_normalization():
    head_w = constant(RNG.uniform(-1, 1, (6, 4)))
    head_b = constant(RNG.uniform(-1, 1, (1, 4)))
    pred = classify(constant(RNG.uniform(-1, 1, (5, 6))), head_w, head_b)
    assert np.array_equal(pred.logits.data.argmax(axis=1),
                          pred.probabilities.data.argmax(axis=1))
    np.testing.assert_allclose(pred.probabilities.data.sum(axis=1),
                               np.ones(5), atol=1e-12)
    assert pred.probabilities.data.min() >= 0


def test_loss_examples():
    probs = constant(np.full((1, 3), 1 / 3))
    pred = Prediction(logits=probs, probabilities=probs, graph_embedding=probs)
    msym = constant(np.zeros((2, 2)))
    lam0 = SparsityPrior(retention=0.5, weight=0.0)
    value = total_loss(pred, [0], msym, lam0)
    assert float(value.data) == pytest.approx(np.log(3.0), abs=1e-12)

    # perfect fit with mask at the prior: loss ~ 0
    sure = np.array([[1.0 - 1e-12, 1e-12]])
    pred2 = Prediction(logits=constant(sure), probabilities=constant(sure),
                       graph_embedding=probs)
    at_prior = np.full((3, 3), 0.4)
    np.fill_diagonal(at_prior, 0.0)
    lam1 = SparsityPrior(retention=0.4, weight=1.0)
    assert float(total_loss(pred2, [0], constant(at_prior), lam1).data) < 1e-6


def test_lambda_zero_is_pure_cross_entropy():
    probs = constant(np.array([[0.25, 0.75]]))
    pred = Prediction(logits=probs, probabilities=probs, graph_embedding=probs)
    msym = constant(np.full((3, 3), 0.9) - 0.9 * np.eye(3))
    value = total_loss(pred, [1], msym, SparsityPrior(retention=0.15, weight=0.0))
    assert float(value.data) == pytest.approx(-np.log(0.75), abs=1e-12)


# ---------------------------------------------------------------------------
# full forward
# ---------------------------------------------------------------------------

def test_eval_forward_is_deterministic():
    model = tiny_model()
    seq = make_sequence()
    p1, m1, g1 = model.forward(seq, mode="eval", tau=1.0)
    p2, m2, g2 = model.forward(seq, mode="eval", tau=1.0)
    assert np.array_equal(p1.probabilities.data, p2.probabilities.data)
    assert np.array_equal(m1.symmetrized.data, m2.symmetrized.data)
    assert np.array_equal(g1.data, g2.data)


def test_forward_output_contract():
    model = tiny_model(n_classes=3)
    seq = make_sequence()
    pred, mask, gated = model.forward(seq, mode="eval", tau=1.0)
    assert pred.logits.shape == (3,)
    assert pred.probabilities.data.sum() == pytest.approx(1.0, abs=1e-12)
    m = mask.symmetrized.data
    assert np.array_equal(m, m.T)
    assert np.array_equal(np.diag(m), np.zeros(4))
    assert np.all(gated.data <= model.forward(seq, "eval", 1.0)[2].data + 1e-15)


def test_mask_override_reduces_to_plain_gat():
    model = tiny_model()
    seq = make_sequence()
    x = np.transpose(seq.node_features, (1, 0, 2))[None]
    adj = seq.adjacency[None]
    ones = np.ones((4, 4)) - np.eye(4)
    out = model.forward_batch(x, adj, mode="eval", tau=1.0, mask_override=ones)
    np.testing.assert_allclose(out.gated.data[0],
                               out.fused.fused_adjacency.data[0], atol=1e-15)


def test_channel_permutation_leaves_probabilities_unchanged():
    """Relabeling channels permutes node states and leaves the pooled
    embedding and probabilities unchanged. The positional coordinates are a
    constant of the graph (defined only up to eigenvector sign), so they are
    carried along with the permutation."""
    model = tiny_model(n_channels=6, feature_dim=5)
    seq = make_sequence(n_windows=4, n_channels=6)
    x = np.transpose(seq.node_features, (1, 0, 2))[None]
    adj = seq.adjacency[None]
    base = model.forward_batch(x, adj, mode="eval", tau=1.0)

    perm = RNG.permutation(6)
    out = model.forward_batch(x[:, perm], adj[:, :, perm][:, :, :, perm],
                              mode="eval", tau=1.0,
                              pe_override=base.encoding[:, perm])
    np.testing.assert_allclose(out.prediction.probabilities.data,
                               base.prediction.probabilities.data, atol=1e-10)
    # node-level states permute: the gated adjacency moves with the relabeling
    np.testing.assert_allclose(out.gated.data[0],
                               base.gated.data[0][perm][:, perm], atol=1e-12)


def test_end_to_end_gradients_match_finite_differences():
    """Composite loss on a 4-channel, 3-window input; PE frozen at the base
    parameters (it is detached by design)."""
    model = tiny_model()
    seq = make_sequence()
    x = np.transpose(seq.node_features, (1, 0, 2))[None]
    adj = seq.adjacency[None]
    noise = mask_noise_block(3, 0, 0, 4)[None]
    labels = np.array([1])
    prior = SparsityPrior(retention=0.15, weight=1.0)
    pe0 = model.forward_batch(x, adj, "train", 2.0, noise=noise).encoding.copy()

    def loss_tensor():
        out = model.forward_batch(x, adj, "train", 2.0, noise=noise,
                                  pe_override=pe0)
        return total_loss(out.prediction, labels, out.mask.symmetrized, prior)

    worst = 0.0
    for name in model.store.names():
        tensor = model.store[name]
        with Tape() as tape:
            loss = loss_tensor()
        analytic = backward(tape, loss).require(tensor)

        def fn(values, tensor=tensor):
            keep = tensor.data.copy()
            tensor.data[...] = values
            result = float(loss_tensor().data)
            tensor.data[...] = keep
            return result

        fd = central_difference(fn, tensor.data.copy(), 1e-5)
        err = np.abs(analytic - fd).max() / max(1.0, np.abs(fd).max())
        worst = max(worst, err)
    assert worst < 1e-4
