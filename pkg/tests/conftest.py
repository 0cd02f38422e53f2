import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seegraph.cohort import CohortSpec, generate_cohort, subject_split
from seegraph.config import ModelConfig


def tiny_model_config(**overrides) -> ModelConfig:
    """Small but structurally complete model configuration for unit tests."""
    base = dict(dim=8, heads=2, d_pe=2, gat_layers=2, gat_hidden=8,
                epochs=2, batch=4, seed=11, window_s=0.5, stride_s=0.25)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_cohort_spec(**overrides) -> CohortSpec:
    base = dict(
        n_channels=8,
        subjects_per_class=5,
        sample_rate_hz=64.0,
        duration_s=6.0,
        planted_edges=(((0, 1, 0.9), (2, 3, 0.9)), ((0, 2, 0.9), (1, 3, 0.9))),
    )
    base.update(overrides)
    return CohortSpec(**base)


@pytest.fixture(scope="session")
def tiny_cohort():
    cohort = generate_cohort(tiny_cohort_spec(), seed=7)
    return subject_split(cohort, 0.8, seed=7)


def random_adjacency(rng, n: int) -> np.ndarray:
    """Random symmetric zero-diagonal matrix with entries in (0, 1)."""
    a = rng.uniform(0.05, 0.95, (n, n))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return a


def random_sequence(rng, n_windows: int, n_channels: int, dim: int):
    """Random (X, A) pair shaped like a dynamic graph sequence."""
    x = rng.uniform(-1.0, 1.0, (n_windows, n_channels, dim))
    adj = np.stack([random_adjacency(rng, n_channels) for _ in range(n_windows)])
    return x, adj
