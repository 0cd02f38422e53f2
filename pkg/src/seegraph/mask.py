"""Node-guided sparse explanatory connectivity mask.

Per-pair logits come from concatenated endpoint embeddings through a shared
MLP (never from the fused adjacency, so there is no circular dependence on the
connectivity being gated). Masks are sampled with the binary-concrete
(Gumbel-Sigmoid) relaxation, symmetrized with an exactly zero diagonal, and
pulled toward a Bernoulli retention prior by a KL penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, add, broadcast_to, constant, elu, log, matmul,
                       mul, reshape, scalar_mul, sigmoid, slice_, sub, sum_,
                       transpose)
from .errors import ConfigError, ShapeError, ValidationError
from .params import ParameterStore

# float64 sigmoids saturate to exactly 0/1 around |x| ~ 37; this affine clamp
# keeps the KL logs finite with O(1e-12) bias.
_CLAMP = 1e-12


@dataclass(frozen=True)
class SparsityPrior:
    """Bernoulli retention prior: target rate r, stability epsilon, weight."""

    retention: float
    epsilon: float = 1e-8
    weight: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.retention < 1.0):
            raise ValidationError("retention rate must lie in (0, 1)")
        if not (0.0 < self.epsilon <= 1e-6):
            raise ValidationError("epsilon must lie in (0, 1e-6]")
        if self.weight < 0.0:
            raise ValidationError("KL weight must be nonnegative")


@dataclass(frozen=True)
class TemperatureSchedule:
    tau_start: float
    tau_min: float
    decay: float

    def __post_init__(self):
        if self.tau_min <= 0 or self.tau_start < self.tau_min:
            raise ValidationError("need tau_start >= tau_min > 0")
        if not (0.0 < self.decay <= 1.0):
            raise ValidationError("decay must lie in (0, 1]")


def anneal(schedule: TemperatureSchedule, epoch: int) -> float:
    """tau = max(tau_min, tau_start * decay^epoch)."""
    if epoch < 0:
        raise ConfigError("epoch must be nonnegative")
    return max(schedule.tau_min, schedule.tau_start * schedule.decay ** epoch)


@dataclass
class EdgeMask:
    """Logits, sampled mask, symmetrized mask, and the temperature used."""

    logits: Tensor        # (..., N, N)
    sampled: Tensor       # (..., N, N), entries in (0, 1)
    symmetrized: Tensor   # (..., N, N), symmetric, zero diagonal
    temperature: float


@dataclass
class MaskParams:
    """Shared pair-scoring MLP: linear(2D'->D') -> ELU -> linear(D'->1).

    When the connectivity-wise extractor is ablated, a single learned global
    bias replaces the MLP and every pair gets the same logit.
    """

    in_dim: int
    w1: Tensor | None
    b1: Tensor | None
    w2: Tensor | None
    b2: Tensor | None
    global_bias: Tensor | None

    @classmethod
    def create(cls, store: ParameterStore, in_dim: int, seed,
               connectivity_wise: bool = True) -> "MaskParams":
        if connectivity_wise:
            return cls(
                in_dim=in_dim,
                w1=store.add_dense("mask.w1", (2 * in_dim, in_dim), 2 * in_dim, seed),
                b1=store.add_zeros("mask.b1", (1, in_dim)),
                w2=store.add_dense("mask.w2", (in_dim, 1), in_dim, seed),
                b2=store.add_zeros("mask.b2", (1, 1)),
                global_bias=None,
            )
        return cls(in_dim=in_dim, w1=None, b1=None, w2=None, b2=None,
                   global_bias=store.add_zeros("mask.global_bias", (1, 1)))


_SELECTORS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _selectors(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(N^2, N) one-hot matrices picking h_i and h_j for every ordered pair."""
    cached = _SELECTORS.get(n)
    if cached is None:
        src = np.zeros((n * n, n))
        dst = np.zeros((n * n, n))
        idx = np.arange(n * n)
        src[idx, idx // n] = 1.0
        dst[idx, idx % n] = 1.0
        cached = (src, dst)
        _SELECTORS[n] = cached
    return cached


def edge_logits(embeddings: Tensor, params: MaskParams) -> Tensor:
    """s_ij = MLP([h_i (+) h_j]) for every ordered pair -> (..., N, N)."""
    n = embeddings.shape[-2]
    batch = embeddings.shape[:-2]
    if params.global_bias is not None:
        return broadcast_to(params.global_bias, batch + (n, n))
    src_sel, dst_sel = _selectors(n)
    h_i = matmul(constant(src_sel), embeddings)   # (..., N^2, D')
    h_j = matmul(constant(dst_sel), embeddings)
    # Block form of [h_i (+) h_j] @ W1: same result, no materialized concat.
    w1_src = slice_(params.w1, (slice(0, params.in_dim), slice(None)))
    w1_dst = slice_(params.w1, (slice(params.in_dim, 2 * params.in_dim), slice(None)))
    pair = add(matmul(h_i, w1_src), matmul(h_j, w1_dst))
    hidden = elu(add(pair, broadcast_to(params.b1, pair.shape)))
    scores = add(matmul(hidden, params.w2), broadcast_to(params.b2, batch + (n * n, 1)))
    return reshape(scores, batch + (n, n))


def sample_mask(logits: Tensor, tau: float, rng=None, mode: str = "train") -> Tensor:
    """Binary-concrete sample m = sigmoid((s + g)/tau) with Logistic(0,1)
    noise g in train mode; eval mode pins the noise at its median 0."""
    if tau <= 0:
        raise ConfigError("temperature must be positive")
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown mask mode {mode!r}")
    if mode == "eval":
        return sigmoid(scalar_mul(logits, 1.0 / tau))
    if rng is None:
        raise ConfigError("train-mode sampling needs a noise source")
    if isinstance(rng, np.ndarray):
        noise = rng
        if noise.shape != logits.shape:
            raise ShapeError(f"noise shape {noise.shape} != logits {logits.shape}")
    else:
        u = np.clip(rng.random(logits.shape), 2 ** -53, 1 - 2 ** -53)
        noise = np.log(u) - np.log1p(-u)
    shifted = add(logits, constant(noise))
    return sigmoid(scalar_mul(shifted, 1.0 / tau))


def symm_zero_diag(mask: Tensor) -> Tensor:
    """(M + M^T)/2 with the diagonal set to exactly zero."""
    if mask.shape[-1] != mask.shape[-2]:
        raise ShapeError(f"mask must be square, got {mask.shape}")
    n = mask.shape[-1]
    sym = scalar_mul(add(mask, transpose(mask)), 0.5)
    hollow = np.ones((n, n))
    np.fill_diagonal(hollow, 0.0)
    return mul(sym, constant(np.broadcast_to(hollow, mask.shape).copy()))


def kl_sparsity(msym: Tensor, prior: SparsityPrior) -> Tensor:
    """Mean over off-diagonal entries (and any batch dims) of the elementwise
    KL to a Bernoulli(r) prior."""
    n = msym.shape[-1]
    count = n * (n - 1)
    for dim in msym.shape[:-2]:
        count *= dim
    m = add(scalar_mul(msym, 1.0 - 2.0 * _CLAMP),
            constant(np.full(msym.shape, _CLAMP)))
    ones = constant(np.ones(msym.shape))
    inv = sub(ones, m)
    log_r = float(np.log(prior.retention + prior.epsilon))
    log_inv_r = float(np.log(1.0 - prior.retention + prior.epsilon))
    per_entry = add(
        mul(m, sub(log(m), constant(np.full(msym.shape, log_r)))),
        mul(inv, sub(log(inv), constant(np.full(msym.shape, log_inv_r)))),
    )
    hollow = np.ones((n, n))
    np.fill_diagonal(hollow, 0.0)
    masked = mul(per_entry, constant(np.broadcast_to(hollow, msym.shape).copy()))
    return scalar_mul(sum_(masked), 1.0 / count)


def salience_ranking(msym: np.ndarray, abar: np.ndarray) -> list[dict]:
    """Eval-mode explanation: per unordered pair, salience = mask * fused
    weight; sorted by salience descending, ties by (i, j) ascending."""
    n = msym.shape[0]
    rows, cols = np.triu_indices(n, 1)
    entries = []
    for i, j in zip(rows.tolist(), cols.tolist()):
        entries.append({
            "i": i,
            "j": j,
            "mask": float(msym[i, j]),
            "fused_weight": float(abar[i, j]),
            "salience": float(msym[i, j] * abar[i, j]),
        })
    entries.sort(key=lambda e: (-e["salience"], e["i"], e["j"]))
    return entries
