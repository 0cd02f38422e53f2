"""Gated graph predictor and the assembled network.

The learned mask gates the fused connectivity (elementwise), multi-layer graph
attention runs on the gated adjacency with a unit-gate self-connection per
node, mean pooling collapses node states to a graph embedding, and a linear
head produces class probabilities. The composite objective couples
cross-entropy with the retention-prior KL on the symmetrized mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lappe
from .autodiff import (Tensor, add, broadcast_to, constant, elu, leaky_relu,
                       log, matmul, mean, mul, reshape, scalar_mul, slice_,
                       softmax, sum_, transpose)
from .config import ModelConfig
from .encoder import AttentionParams, FusedRepresentation, fuse_batch
from .errors import ShapeError, ValidationError
from .graphs import DynamicGraphSequence
from .mask import (EdgeMask, MaskParams, SparsityPrior, edge_logits,
                   sample_mask, symm_zero_diag)
from .params import ParameterStore

_NEG_INF = -1e30


@dataclass
class GatLayerParams:
    """One graph-attention layer: weight (out x in), attention vector (2*out)."""

    weight: Tensor
    attn: Tensor
    slope: float = 0.2

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def create(cls, store: ParameterStore, index: int, in_dim: int,
               out_dim: int, seed) -> "GatLayerParams":
        return cls(
            weight=store.add_dense(f"gat{index}.w", (out_dim, in_dim), in_dim, seed),
            attn=store.add_dense(f"gat{index}.a", (2 * out_dim, 1), 2 * out_dim, seed),
        )


@dataclass
class Prediction:
    logits: Tensor          # (..., C)
    probabilities: Tensor   # (..., C), rows sum to 1
    graph_embedding: Tensor


def gate_adjacency(msym: Tensor, abar: Tensor) -> Tensor:
    """A_hat = M_sym (elementwise) A_bar; gradients flow into both factors."""
    if msym.shape != abar.shape:
        raise ShapeError(f"mask {msym.shape} vs adjacency {abar.shape}")
    return mul(msym, abar)


def gat_layer(states: Tensor, gated: Tensor, params: GatLayerParams) -> Tensor:
    """One attention layer over the gated graph.

    Neighborhoods are the strictly positive gated edges plus a unit-gate
    self-connection (so isolated nodes never face an empty softmax); gate
    weights modulate the attention-weighted messages.
    """
    n = gated.shape[-1]
    out_dim = params.out_dim
    wh = matmul(states, transpose(params.weight))            # (..., N, F')
    a_src = slice_(params.attn, (slice(0, out_dim), slice(None)))
    a_dst = slice_(params.attn, (slice(out_dim, 2 * out_dim), slice(None)))
    src_scores = matmul(wh, a_src)                           # (..., N, 1)
    dst_scores = matmul(wh, a_dst)
    pair_logits = add(broadcast_to(src_scores, gated.shape),
                      broadcast_to(transpose(dst_scores), gated.shape))
    pair_logits = leaky_relu(pair_logits, params.slope)

    eye = np.eye(n)
    neighbors = (gated.data > 0) | eye.astype(bool)
    keep = np.broadcast_to(neighbors.astype(np.float64), gated.shape).copy()
    banish = (1.0 - keep) * _NEG_INF
    attention = softmax(add(mul(pair_logits, constant(keep)), constant(banish)),
                        axis=-1)

    self_gate = constant(np.broadcast_to(eye, gated.shape).copy())
    messages = matmul(mul(add(gated, self_gate), attention), wh)
    return elu(messages)


def graph_pool(states: Tensor) -> Tensor:
    """Arithmetic mean over node rows."""
    return mean(states, axis=-2)


def classify(embedding: Tensor, head_w: Tensor, head_b: Tensor) -> Prediction:
    """Single linear layer -> logits -> softmax probabilities."""
    squeeze = embedding.ndim == 1
    emb = reshape(embedding, (1, embedding.shape[0])) if squeeze else embedding
    logits = add(matmul(emb, head_w), broadcast_to(head_b, emb.shape[:-1] + (head_w.shape[1],)))
    if squeeze:
        logits = reshape(logits, (head_w.shape[1],))
        probs = softmax(logits, axis=0)
    else:
        probs = softmax(logits, axis=-1)
    return Prediction(logits=logits, probabilities=probs, graph_embedding=embedding)


def cross_entropy(pred: Prediction, labels) -> Tensor:
    """Mean negative log-probability of the true class."""
    probs = pred.probabilities
    if probs.ndim == 1:
        probs = reshape(probs, (1, probs.shape[0]))
    flat = reshape(probs, (-1, probs.shape[-1]))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size != flat.shape[0]:
        raise ShapeError(f"{labels.size} labels for {flat.shape[0]} predictions")
    n_classes = flat.shape[-1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValidationError("label outside class range")
    onehot = np.zeros((labels.size, n_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    picked = sum_(mul(flat, constant(onehot)), axis=-1)
    return scalar_mul(mean(log(picked)), -1.0)


def total_loss(pred: Prediction, labels, msym: Tensor,
               prior: SparsityPrior) -> Tensor:
    """Cross-entropy plus the weighted retention-prior KL (the composite
    training objective)."""
    from .mask import kl_sparsity
    ce = cross_entropy(pred, labels)
    if prior.weight == 0.0:
        return ce
    return add(ce, scalar_mul(kl_sparsity(msym, prior), prior.weight))


@dataclass
class ForwardOut:
    fused: FusedRepresentation
    encoding: np.ndarray | None   # (S, N, d_pe) positional coordinates
    mask: EdgeMask
    gated: Tensor
    prediction: Prediction


class SeeGraphModel:
    """Full pipeline: temporal fusion -> positional encoding -> node-guided
    mask -> gated graph attention -> classification."""

    def __init__(self, config: ModelConfig, feature_dim: int, n_channels: int,
                 n_classes: int):
        config.validate()
        self.config = config
        self.feature_dim = feature_dim
        self.n_channels = n_channels
        self.n_classes = n_classes
        self.store = ParameterStore()
        seed = config.seed
        self.attention = AttentionParams.create(
            self.store, feature_dim, config.dim, config.heads, seed)
        state_dim = config.dim + config.pe_width
        self.mask_params = MaskParams.create(
            self.store, state_dim, seed, connectivity_wise=config.use_cwise)
        self.gat_layers: list[GatLayerParams] = []
        in_dim = state_dim
        for index in range(config.gat_layers):
            layer = GatLayerParams.create(self.store, index, in_dim,
                                          config.gat_hidden, seed)
            self.gat_layers.append(layer)
            in_dim = config.gat_hidden
        self.head_w = self.store.add_dense("head.w", (in_dim, n_classes), in_dim, seed)
        self.head_b = self.store.add_zeros("head.b", (1, n_classes))

    # ------------------------------------------------------------------

    def positional_encoding(self, abar: np.ndarray) -> np.ndarray:
        """Laplacian coordinates for one fused adjacency (constant w.r.t. the
        tape)."""
        lap = lappe.normalized_laplacian(abar)
        return lappe.laplacian_pe(lap, self.config.d_pe,
                                  self.config.zero_threshold).vectors

    def forward_batch(self, x: np.ndarray, adj: np.ndarray, mode: str,
                      tau: float, noise: np.ndarray | None = None,
                      pe_override: np.ndarray | None = None,
                      mask_override: np.ndarray | None = None) -> ForwardOut:
        """Run the pipeline on a stacked batch: x (S, N, T, d), adj (S, T, N, N)."""
        fused = fuse_batch(x, adj, self.attention)
        if self.config.use_pe:
            if pe_override is not None:
                encoding = pe_override
            else:
                abar = fused.fused_adjacency.data
                encoding = np.stack([self.positional_encoding(abar[s])
                                     for s in range(abar.shape[0])])
            states = lappe.concat_pe(fused.node_embeddings, encoding)
        else:
            encoding = None
            states = fused.node_embeddings

        logits = edge_logits(states, self.mask_params)
        sampled = sample_mask(logits, tau, rng=noise, mode=mode)
        msym = symm_zero_diag(sampled)
        if mask_override is not None:
            msym = constant(np.broadcast_to(mask_override, msym.shape).copy())
        edge_mask = EdgeMask(logits=logits, sampled=sampled, symmetrized=msym,
                             temperature=tau)

        gated = gate_adjacency(msym, fused.fused_adjacency)
        h = states
        for layer in self.gat_layers:
            h = gat_layer(h, gated, layer)
        prediction = classify(graph_pool(h), self.head_w, self.head_b)
        return ForwardOut(fused=fused, encoding=encoding, mask=edge_mask,
                          gated=gated, prediction=prediction)

    def forward(self, seq: DynamicGraphSequence, mode: str = "eval",
                tau: float | None = None, noise: np.ndarray | None = None):
        """Single-sequence forward: returns (Prediction, EdgeMask, gated
        adjacency tensor)."""
        if tau is None:
            tau = self.config.tau_min
        x = np.transpose(seq.node_features, (1, 0, 2))[None]
        adj = seq.adjacency[None]
        batch_noise = None if noise is None else noise[None]
        out = self.forward_batch(x, adj, mode, tau, noise=batch_noise)
        n = self.n_channels
        pred = Prediction(
            logits=reshape(out.prediction.logits, (self.n_classes,)),
            probabilities=reshape(out.prediction.probabilities, (self.n_classes,)),
            graph_embedding=reshape(out.prediction.graph_embedding,
                                    (out.prediction.graph_embedding.shape[-1],)),
        )
        edge_mask = EdgeMask(
            logits=reshape(out.mask.logits, (n, n)),
            sampled=reshape(out.mask.sampled, (n, n)),
            symmetrized=reshape(out.mask.symmetrized, (n, n)),
            temperature=out.mask.temperature,
        )
        return pred, edge_mask, reshape(out.gated, (n, n))
