import numpy as np
import pytest

from conftest import tiny_cohort_spec
from oracles import pearson_abs
from seegraph.cohort import (CohortSpec, add_noise, default_planted_edges,
                             generate_cohort, subject_split)
from seegraph.errors import ValidationError
from seegraph.graphs import WindowingSpec, band_for, build_sequence, zscore_channels
from seegraph.recordings import Recording

RNG = np.random.default_rng(55)


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_default_planted_layout_disjoint_and_nonisomorphic():
    layout = default_planted_edges(16, 3, 6, 0.8)
    as_sets = [set((i, j) for i, j, _ in edges) for edges in layout]
    assert all(len(s) == 6 for s in as_sets)
    for a in range(3):
        for b in range(a + 1, 3):
            assert not (as_sets[a] & as_sets[b])
    # degree sequences differ: matching (max 1), triangles (max 2), clique (3)
    def max_degree(edges):
        degree = {}
        for i, j in edges:
            degree[i] = degree.get(i, 0) + 1
            degree[j] = degree.get(j, 0) + 1
        return max(degree.values())
    assert [max_degree(s) for s in as_sets] == [1, 2, 3]


def test_spec_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        CohortSpec(n_channels=8, planted_edges=(((0, 0, 0.5),), ((0, 1, 0.5),)))
    with pytest.raises(ValidationError):
        CohortSpec(n_channels=8, planted_edges=(((0, 1, 1.5),), ((0, 2, 0.5),)))
    with pytest.raises(ValidationError):
        # identical classes
        CohortSpec(n_channels=8, planted_edges=(((0, 1, 0.5),), ((0, 1, 0.5),)))


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def test_generation_is_deterministic():
    spec = tiny_cohort_spec()
    a = generate_cohort(spec, seed=3)
    b = generate_cohort(spec, seed=3)
    c = generate_cohort(spec, seed=4)
    for ra, rb in zip(a.recordings, b.recordings):
        assert np.array_equal(ra.samples, rb.samples)
    assert not np.array_equal(a.recordings[0].samples, c.recordings[0].samples)


def test_full_coupling_dominates_correlation():
    spec = CohortSpec(
        n_channels=4, classes=2, subjects_per_class=1,
        sample_rate_hz=64.0, duration_s=4.0,
        planted_edges=(((0, 1, 1.0),), ((2, 3, 1.0),)),
        band_profile=((), ()),
        background_noise_std=0.1,
    )
    cohort = generate_cohort(spec, seed=2)
    rec = cohort.recordings[0]
    assert pearson_abs(rec.samples[0], rec.samples[1]) > 0.9


def test_class_difference_concentrates_on_planted_pairs():
    spec = tiny_cohort_spec(subjects_per_class=20)
    cohort = generate_cohort(spec, seed=5)
    wspec = WindowingSpec(32, 16)
    band = band_for("broadband", spec.sample_rate_hz)
    mean_adj = {0: [], 1: []}
    for rec in cohort.recordings:
        seq = build_sequence(rec, wspec, band)
        mean_adj[rec.label].append(seq.adjacency.mean(axis=0))
    diff = np.abs(np.mean(mean_adj[0], axis=0) - np.mean(mean_adj[1], axis=0))
    planted = set()
    for edges in spec.planted_edges:
        planted |= {(i, j) for i, j, _ in edges}
    rows, cols = np.triu_indices(spec.n_channels, 1)
    scores = sorted(((diff[i, j], (i, j)) for i, j in zip(rows, cols)),
                    reverse=True)
    top = {pair for _, pair in scores[:len(planted)]}
    assert len(top & planted) >= len(planted) - 1


def test_planted_margin_at_default_noise():
    """Planted-pair mean fused correlation beats non-planted pairs by >= 0.2
    at coupling 0.8, background noise 0.5 (checked over 20 subjects)."""
    spec = CohortSpec(subjects_per_class=10)  # defaults: coupling .8, noise .5
    cohort = generate_cohort(spec, seed=9)
    wspec = WindowingSpec(100, 50)
    band = band_for("broadband", 100.0)
    planted_vals, other_vals = [], []
    for rec in cohort.recordings:
        seq = build_sequence(rec, wspec, band)
        mean_adj = seq.adjacency.mean(axis=0)
        planted = {(i, j) for i, j, _ in spec.planted_edges[rec.label]}
        rows, cols = np.triu_indices(spec.n_channels, 1)
        for i, j in zip(rows, cols):
            (planted_vals if (i, j) in planted else other_vals).append(mean_adj[i, j])
    margin = np.mean(planted_vals) - np.mean(other_vals)
    assert margin >= 0.2


def test_generated_sequences_pass_invariants():
    spec = tiny_cohort_spec()
    cohort = generate_cohort(spec, seed=1)
    seq = build_sequence(cohort.recordings[0], WindowingSpec(32, 16),
                         band_for("alpha", spec.sample_rate_hz))
    seq.validate()


# ---------------------------------------------------------------------------
# measurement noise
# ---------------------------------------------------------------------------

def test_zero_sigma_is_identity():
    rec = Recording("s0", RNG.normal(size=(3, 100)), 100.0, 0)
    out = add_noise(rec, 0.0, seed=4)
    assert np.array_equal(out.samples, rec.samples)


def test_noise_moments():
    rec = Recording("s0", np.zeros((4, 250_000)), 100.0, 0)
    out = add_noise(rec, 0.3, seed=4)
    added = out.samples.ravel()
    assert abs(added.mean()) < 0.002
    assert abs(added.std() - 0.3) < 0.002


def test_noise_commutes_with_channel_permutation():
    rec = Recording("s0", RNG.normal(size=(5, 200)), 100.0, 0)
    perm = [3, 1, 4, 0, 2]
    noisy_then_permute = add_noise(rec, 0.4, seed=8).permuted(perm)
    permute_then_noisy = add_noise(rec.permuted(perm), 0.4, seed=8)
    assert np.array_equal(noisy_then_permute.samples, permute_then_noisy.samples)


def test_noise_differs_across_subjects():
    a = add_noise(Recording("s0", np.zeros((2, 50)), 100.0, 0), 1.0, seed=3)
    b = add_noise(Recording("s1", np.zeros((2, 50)), 100.0, 0), 1.0, seed=3)
    assert not np.array_equal(a.samples, b.samples)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def test_split_counts_and_partition():
    spec = tiny_cohort_spec(subjects_per_class=40)
    cohort = generate_cohort(spec, seed=6)
    split = subject_split(cohort, 0.8, seed=6)
    for label in (0, 1):
        ids = [r.subject_id for r in split.recordings if r.label == label]
        train = [s for s in ids if split.splits[s] == "train"]
        test = [s for s in ids if split.splits[s] == "test"]
        assert len(train) == 32 and len(test) == 8
        assert not (set(train) & set(test))


def test_split_determinism():
    spec = tiny_cohort_spec()
    cohort = generate_cohort(spec, seed=2)
    a = subject_split(cohort, 0.8, seed=11)
    b = subject_split(cohort, 0.8, seed=11)
    c = subject_split(cohort, 0.8, seed=12)
    assert a.splits == b.splits
    assert a.splits != c.splits


def test_split_needs_two_subjects_per_class():
    spec = tiny_cohort_spec(subjects_per_class=1)
    cohort = generate_cohort(spec, seed=2)
    with pytest.raises(ValidationError):
        subject_split(cohort, 0.8, seed=1)
