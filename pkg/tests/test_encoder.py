import numpy as np
import pytest

from conftest import random_sequence
from oracles import central_difference
from seegraph.autodiff import Tape, Tensor, backward, constant, matmul, mul, reshape, slice_, sum_
from seegraph.encoder import (AttentionParams, encode_edges, encode_nodes,
                              fuse, mha_time, pair_index)
from seegraph.errors import ConfigError
from seegraph.params import ParameterStore

RNG = np.random.default_rng(31)


def make_params(feature_dim=5, dim=8, heads=2, seed=3):
    store = ParameterStore()
    params = AttentionParams.create(store, feature_dim, dim, heads, seed)
    return store, params


def test_dim_must_divide_heads():
    with pytest.raises(ConfigError):
        make_params(dim=9, heads=2)


def test_single_token_attention_is_value_projection():
    store, params = make_params()
    token = RNG.uniform(-1, 1, (1, 8))
    out = mha_time(constant(token), params)
    expected = token @ params.v.data @ params.out.data
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_attention_rows_sum_to_one():
    # softmax normalization checked through uniform-value probes: with V rows
    # all equal, every attended token equals that row regardless of scores.
    store, params = make_params()
    tokens = RNG.uniform(-1, 1, (6, 8))
    out_a = mha_time(constant(tokens), params)
    # translate the value projection's effect: replace tokens by tokens + c*1?
    # direct check instead: explicit per-head attention weights
    q = tokens @ params.q.data
    k = tokens @ params.k.data
    dk = params.head_dim
    for h in range(params.heads):
        cols = slice(h * dk, (h + 1) * dk)
        scores = q[:, cols] @ k[:, cols].T / np.sqrt(dk)
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(weights.sum(axis=1), np.ones(6), atol=1e-12)
    assert out_a.shape == (6, 8)


def test_equal_tokens_stay_equal():
    store, params = make_params()
    tokens = np.repeat(RNG.uniform(-1, 1, (1, 8)), 5, axis=0)
    out = mha_time(constant(tokens), params)
    for row in range(1, 5):
        np.testing.assert_allclose(out.data[row], out.data[0], atol=1e-12)


def test_time_permutation_equivariance():
    store, params = make_params()
    tokens = RNG.uniform(-1, 1, (7, 8))
    perm = RNG.permutation(7)
    out = mha_time(constant(tokens), params).data
    out_perm = mha_time(constant(tokens[perm]), params).data
    np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)


def test_encode_nodes_shape_and_per_channel_determinism():
    store, params = make_params(feature_dim=12, dim=16, heads=4)
    x = RNG.uniform(-1, 1, (7, 4, 12))
    x[:, 2, :] = x[:, 0, :]  # duplicate channel trajectories
    out = encode_nodes(x, params)
    assert out.shape == (4, 16)
    np.testing.assert_allclose(out.data[2], out.data[0], atol=1e-13)


def test_encode_nodes_single_window_is_identity_average():
    store, params = make_params(feature_dim=5, dim=8)
    x = RNG.uniform(-1, 1, (1, 3, 5))
    out = encode_nodes(x, params)
    # T=1: averaging over one token; attention reduces to V then W^O
    expected = (x[0] @ params.node_in.data) @ params.v.data @ params.out.data
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_channel_permutation_equivariance():
    store, params = make_params(feature_dim=6, dim=8)
    x, adj = random_sequence(RNG, 5, 6, 6)
    perm = RNG.permutation(6)
    h = encode_nodes(x, params).data
    h_perm = encode_nodes(x[:, perm, :], params).data
    np.testing.assert_allclose(h_perm, h[perm], atol=1e-12)
    a = encode_edges(adj, params).data
    a_perm = encode_edges(adj[:, perm][:, :, perm], params).data
    np.testing.assert_allclose(a_perm, a[perm][:, perm], atol=1e-12)


def test_encode_edges_structure():
    store, params = make_params()
    _, adj = random_sequence(RNG, 6, 5, 3)
    out = encode_edges(adj, params).data
    assert np.array_equal(out, out.T)
    assert np.array_equal(np.diag(out), np.zeros(5))
    rows, cols = pair_index(5)
    values = out[rows, cols]
    assert values.min() > 0.0 and values.max() < 1.0


def test_identical_trajectories_fuse_identically():
    store, params = make_params()
    _, adj = random_sequence(RNG, 6, 4, 3)
    adj[:, 2, 3] = adj[:, 0, 1]
    adj[:, 3, 2] = adj[:, 0, 1]
    out = encode_edges(adj, params).data
    assert out[2, 3] == pytest.approx(out[0, 1], abs=1e-13)


def test_edge_stream_equals_full_mha_composition():
    """The last-token shortcut must match lifting the trajectory, running the
    full shared mha_time, reading the final token, and applying the readout."""
    store, params = make_params()
    _, adj = random_sequence(RNG, 6, 4, 3)
    got = encode_edges(adj, params).data
    rows, cols = pair_index(4)
    logistic = lambda v: 1.0 / (1.0 + np.exp(-v))
    for i, j in zip(rows, cols):
        traj = adj[:, i, j][:, None]                      # (T, 1)
        tokens = constant(traj @ params.edge_in.data)     # (T, D)
        attended = mha_time(tokens, params).data[-1]
        value = logistic(float(attended @ params.edge_out_w.data.ravel())
                         + params.edge_out_b.data.item())
        assert abs(got[i, j] - value) < 1e-10


def test_parameter_sharing_between_streams():
    store, params = make_params()
    x, adj = random_sequence(RNG, 5, 4, 5)
    before_nodes = encode_nodes(x, params).data.copy()
    before_edges = encode_edges(adj, params).data.copy()
    # Q/K/V/W^O are the same tensors in both streams: one in-place bump moves both.
    params.q.data += 0.05
    assert not np.allclose(encode_nodes(x, params).data, before_nodes)
    assert not np.allclose(encode_edges(adj, params).data, before_edges)
    names = store.names()
    assert names.count("encoder.q") == 1


def test_fuse_shapes_and_duplicated_channel():
    store, params = make_params(feature_dim=12, dim=16, heads=4)
    x, adj = random_sequence(RNG, 7, 4, 12)
    rep = fuse(x, adj, params)
    assert rep.node_embeddings.shape == (4, 16)
    assert rep.fused_adjacency.shape == (4, 4)

    x2 = x.copy()
    x2[:, 1, :] = x2[:, 0, :]
    rep2 = fuse(x2, adj, params)
    np.testing.assert_allclose(rep2.node_embeddings.data[1],
                               rep2.node_embeddings.data[0], atol=1e-13)


def test_fuse_gradients_match_finite_differences():
    store, params = make_params(feature_dim=4, dim=8, heads=2)
    x, adj = random_sequence(RNG, 3, 4, 4)
    probe_h = RNG.uniform(0.5, 1.5, (4, 8))
    probe_a = RNG.uniform(0.5, 1.5, (4, 4))

    def objective() -> Tensor:
        rep = fuse(x, adj, params)
        return sum_(mul(rep.node_embeddings, constant(probe_h))) + \
            sum_(mul(rep.fused_adjacency, constant(probe_a)))

    for name in store.names():
        tensor = store[name]
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
        scale = max(1.0, np.abs(fd).max())
        assert np.abs(analytic - fd).max() / scale < 1e-4, name
