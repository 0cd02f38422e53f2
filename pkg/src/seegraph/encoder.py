"""Dual-trajectory temporal encoder.

Multi-head self-attention along the window axis, applied independently to
each channel's spectral trajectory and to each channel pair's connectivity
trajectory. Both streams share the Q/K/V and output projections; only the
input lifts (d -> D for nodes, 1 -> D for edges) and the edge readout are
stream-specific. Node embeddings average the attended tokens; the fused
adjacency reads out the attended token at the final window and squashes it
through a logistic so downstream Laplacians see nonnegative weights.

No temporal positional encoding is added, so attention over windows is
permutation-equivariant (asserted in tests as a property, not hidden).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, add, broadcast_to, constant, matmul, mean,
                       reshape, scalar_mul, sigmoid, softmax, transpose)
from .errors import ConfigError
from .params import ParameterStore


@dataclass
class AttentionParams:
    """Shared temporal-attention parameters for both feature streams."""

    dim: int
    heads: int
    node_in: Tensor   # (d, D)
    edge_in: Tensor   # (1, D)
    q: Tensor         # (D, D); head k owns columns k*dk:(k+1)*dk
    k: Tensor
    v: Tensor
    out: Tensor       # (D, D)
    edge_out_w: Tensor  # (D, 1)
    edge_out_b: Tensor  # (1, 1)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    # Readout slope of the pass-through initialization: a coupling value c
    # starts near sigmoid(PASS_GAIN * (c - 0.5)).
    PASS_GAIN = 6.0

    @classmethod
    def create(cls, store: ParameterStore, feature_dim: int, dim: int,
               heads: int, seed) -> "AttentionParams":
        if dim % heads != 0:
            raise ConfigError(f"model dim {dim} not divisible by heads {heads}")
        params = cls(
            dim=dim,
            heads=heads,
            node_in=store.add_dense("encoder.node_in", (feature_dim, dim), feature_dim, seed),
            edge_in=store.add_dense("encoder.edge_in", (1, dim), 1, seed),
            q=store.add_dense("encoder.q", (dim, dim), dim, seed),
            k=store.add_dense("encoder.k", (dim, dim), dim, seed),
            v=store.add_dense("encoder.v", (dim, dim), dim, seed),
            out=store.add_dense("encoder.out", (dim, dim), dim, seed),
            edge_out_w=store.add_dense("encoder.edge_out_w", (dim, 1), dim, seed),
            edge_out_b=store.add_zeros("encoder.edge_out_b", (1, 1)),
        )
        # Gate-style identity init for the fusion readout: align the readout
        # with the value path so the fused weight starts as a squashed
        # attention-weighted temporal mean of the coupling trajectory (the
        # quantity this stage summarizes) instead of a random projection,
        # which leaves the downstream graph stages without usable structure
        # for many epochs. Training refines it from there.
        value_path = (params.edge_in.data @ params.v.data @ params.out.data).ravel()
        scale = cls.PASS_GAIN / float(value_path @ value_path)
        params.edge_out_w.data[...] = (scale * value_path)[:, None]
        params.edge_out_b.data[...] = -0.5 * cls.PASS_GAIN
        return params


@dataclass
class FusedRepresentation:
    """Time-fused node embeddings and fused connectivity."""

    node_embeddings: Tensor  # (..., N, D)
    fused_adjacency: Tensor  # (..., N, N)


def _split_heads(tokens: Tensor, heads: int, dk: int) -> Tensor:
    """(..., T, H*dk) -> (..., H, T, dk)."""
    lead = tokens.ndim - 2
    t = tokens.shape[-2]
    bulk = reshape(tokens, tokens.shape[:-1] + (heads, dk))
    axes = tuple(range(lead)) + (lead + 1, lead, lead + 2)
    return transpose(bulk, axes)


def _merge_heads(attended: Tensor, heads: int, dk: int) -> Tensor:
    """(..., H, T, dk) -> (..., T, H*dk)."""
    lead = attended.ndim - 3
    axes = tuple(range(lead)) + (lead + 1, lead, lead + 2)
    merged = transpose(attended, axes)
    return reshape(merged, merged.shape[:-2] + (heads * dk,))


def _attend(q: Tensor, k: Tensor, v: Tensor, params: AttentionParams) -> Tensor:
    """Scaled dot-product attention per head, heads concatenated and projected."""
    dk = params.head_dim
    scale = 1.0 / np.sqrt(dk)
    qh = _split_heads(q, params.heads, dk)
    kh = _split_heads(k, params.heads, dk)
    vh = _split_heads(v, params.heads, dk)
    scores = scalar_mul(matmul(qh, transpose(kh)), scale)
    context = matmul(softmax(scores, axis=-1), vh)
    return matmul(_merge_heads(context, params.heads, dk), params.out)


def mha_time(tokens: Tensor, params: AttentionParams) -> Tensor:
    """Full bidirectional multi-head self-attention over the time axis.

    Accepts (T, D) or any (..., T, D) stack of independent sequences.
    """
    q = matmul(tokens, params.q)
    k = matmul(tokens, params.k)
    v = matmul(tokens, params.v)
    return _attend(q, k, v, params)


def _node_stream(x_tokens: np.ndarray, params: AttentionParams) -> Tensor:
    """(B, T, d) channel trajectories -> (B, D) time-averaged embeddings."""
    tokens = matmul(constant(x_tokens), params.node_in)
    attended = mha_time(tokens, params)
    return mean(attended, axis=-2)


def _edge_stream(trajectories: np.ndarray, params: AttentionParams) -> Tensor:
    """(B, T) scalar coupling trajectories -> (B,) fused weights in (0, 1).

    Queries are sliced to the final window before the score products: attention
    rows are independent and the output projection is per-token, so this equals
    running mha_time on the lifted trajectory and reading the last token (the
    K/V lifts are likewise composed as traj @ (edge_in @ W), exact up to
    matmul associativity).
    """
    traj = constant(trajectories[:, :, None])            # (B, T, 1)
    k = matmul(traj, matmul(params.edge_in, params.k))   # (B, T, D)
    v = matmul(traj, matmul(params.edge_in, params.v))
    last = constant(trajectories[:, -1:, None])          # (B, 1, 1)
    q = matmul(last, matmul(params.edge_in, params.q))   # (B, 1, D)
    attended = _attend(q, k, v, params)                  # (B, 1, D)
    logits = matmul(attended, params.edge_out_w)         # (B, 1, 1)
    logits = add(logits, broadcast_to(params.edge_out_b, logits.shape))
    squashed = sigmoid(logits)
    return reshape(squashed, (trajectories.shape[0],))


_PAIR_BASIS: dict[int, np.ndarray] = {}


def pair_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle (i, j) arrays enumerating the N(N-1)/2 unordered pairs."""
    return np.triu_indices(n, 1)


def _pair_basis(n: int) -> np.ndarray:
    """(P, N*N) scatter matrix mapping per-pair values to a symmetric,
    zero-diagonal matrix."""
    basis = _PAIR_BASIS.get(n)
    if basis is None:
        rows, cols = pair_index(n)
        basis = np.zeros((rows.size, n * n))
        idx = np.arange(rows.size)
        basis[idx, rows * n + cols] = 1.0
        basis[idx, cols * n + rows] = 1.0
        _PAIR_BASIS[n] = basis
    return basis


def encode_nodes_batch(x: np.ndarray, params: AttentionParams) -> Tensor:
    """(S, N, T, d) -> (S, N, D): each channel encoded independently, shared
    weights."""
    s, n, t, d = x.shape
    flat = _node_stream(x.reshape(s * n, t, d), params)
    return reshape(flat, (s, n, params.dim))


def encode_edges_batch(adj: np.ndarray, params: AttentionParams) -> Tensor:
    """(S, T, N, N) -> (S, N, N): per-pair trajectories encoded independently
    and written back symmetrically with zero diagonal."""
    s, t, n, _ = adj.shape
    rows, cols = pair_index(n)
    traj = adj[:, :, rows, cols]                  # (S, T, P)
    traj = np.ascontiguousarray(np.swapaxes(traj, 1, 2))  # (S, P, T)
    fused = _edge_stream(traj.reshape(s * rows.size, t), params)
    as_rows = reshape(fused, (s, rows.size))
    dense = matmul(as_rows, constant(_pair_basis(n)))
    return reshape(dense, (s, n, n))


def encode_nodes(x: np.ndarray, params: AttentionParams) -> Tensor:
    """(T, N, d) node trajectories -> (N, D) embeddings."""
    t, n, d = x.shape
    batched = encode_nodes_batch(np.transpose(x, (1, 0, 2))[None], params)
    return reshape(batched, (n, params.dim))


def encode_edges(adj: np.ndarray, params: AttentionParams) -> Tensor:
    """(T, N, N) adjacency trajectories -> (N, N) fused connectivity."""
    t, n, _ = adj.shape
    batched = encode_edges_batch(adj[None], params)
    return reshape(batched, (n, n))


def fuse(x: np.ndarray, adj: np.ndarray, params: AttentionParams) -> FusedRepresentation:
    """Compose both streams for one dynamic graph sequence."""
    return FusedRepresentation(node_embeddings=encode_nodes(x, params),
                               fused_adjacency=encode_edges(adj, params))


def fuse_batch(x: np.ndarray, adj: np.ndarray, params: AttentionParams) -> FusedRepresentation:
    return FusedRepresentation(node_embeddings=encode_nodes_batch(x, params),
                               fused_adjacency=encode_edges_batch(adj, params))
