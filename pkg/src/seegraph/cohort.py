"""Synthetic cohorts with planted, class-discriminative connectivity.

Each subject's channel signal is a sum of band-profile oscillators (random
phase and +/-10% amplitude jitter per channel), shared latent oscillations
injected into both endpoints of every planted edge (weighted by the coupling
strength, so planted pairs show elevated absolute Pearson correlation), and
Gaussian background noise. All randomness comes from counter-based streams
keyed by (seed, subject, channel | edge, position), so generation is
order-independent and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import streams
from .config import CohortSettings
from .errors import ValidationError
from .recordings import Recording, default_channel_names

Edge = tuple[int, int, float]


def _matching_edges(per_class: int, n_channels: int) -> list[tuple[int, int]]:
    """Disjoint (even, odd) pairs: (0,1), (2,3), ..."""
    if 2 * per_class > n_channels:
        raise ValidationError(
            f"{per_class} matching edges need {2 * per_class} channels")
    return [(2 * k, 2 * k + 1) for k in range(per_class)]


def _triangle_edges(per_class: int, n_channels: int) -> list[tuple[int, int]]:
    """Disjoint triangles over even channels: (0,2),(2,4),(0,4), (6,8),..."""
    edges = []
    block = 0
    while len(edges) < per_class:
        a, b, c = 6 * block, 6 * block + 2, 6 * block + 4
        if c >= n_channels:
            raise ValidationError("not enough channels for triangle layout")
        edges.extend([(a, b), (b, c), (a, c)])
        block += 1
    return edges[:per_class]


def _clique_edges(per_class: int, n_channels: int) -> list[tuple[int, int]]:
    """Cliques over odd channels: all pairs of (1,3,5,7), then (9,11,13,15)..."""
    edges = []
    block = 0
    while len(edges) < per_class:
        nodes = [8 * block + 1, 8 * block + 3, 8 * block + 5, 8 * block + 7]
        if nodes[-1] >= n_channels:
            raise ValidationError("not enough channels for clique layout")
        for i in range(4):
            for j in range(i + 1, 4):
                edges.append((nodes[i], nodes[j]))
        block += 1
    return edges[:per_class]


def default_planted_edges(n_channels: int, classes: int, per_class: int,
                          coupling: float) -> tuple[tuple[Edge, ...], ...]:
    """Deterministic planted layout giving each class a structurally distinct
    (non-isomorphic) subgraph: a matching for class 0, disjoint triangles for
    class 1, 4-cliques for class 2. The classes' edge sets are disjoint
    ((even,odd) vs (even,even) vs (odd,odd) pairs), so every classifier signal
    is a connectivity difference, not a node-feature difference."""
    builders = [_matching_edges, _triangle_edges, _clique_edges]
    if classes > len(builders):
        raise ValidationError(
            f"default planted layout supports up to {len(builders)} classes; "
            "pass explicit planted_edges")
    layout = []
    for c in range(classes):
        pairs = builders[c](per_class, n_channels)
        layout.append(tuple((i, j, coupling) for i, j in pairs))
    return tuple(layout)


@dataclass
class CohortSpec:
    n_channels: int = 16
    classes: int = 2
    subjects_per_class: int = 40
    sample_rate_hz: float = 100.0
    duration_s: float = 30.0
    planted_edges: tuple[tuple[Edge, ...], ...] | None = None
    band_profile: tuple[tuple[tuple[float, float], ...], ...] | None = None
    planted_freq_band: tuple[float, float] = (8.0, 13.0)
    planted_amplitude: float = 2.2
    background_noise_std: float = 0.5
    amplitude_jitter: float = 0.1
    # Per-channel frequency jitter on background oscillators. Without it every
    # channel shares exact frequencies and background pairs correlate at
    # |cos(phase difference)| instead of ~0.
    freq_jitter_hz: float = 1.5
    seed: int = 1

    def __post_init__(self):
        if self.planted_edges is None:
            self.planted_edges = default_planted_edges(
                self.n_channels, self.classes, 6, 0.8)
        if self.band_profile is None:
            # Same oscillators for every class: theta, alpha, beta background.
            profile = ((6.0, 0.8), (10.0, 0.8), (20.0, 0.5))
            self.band_profile = tuple(profile for _ in range(self.classes))
        self.validate()

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def validate(self):
        if self.n_channels < 2:
            raise ValidationError("need at least 2 channels")
        if self.classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.subjects_per_class < 1:
            raise ValidationError("need at least 1 subject per class")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ValidationError("rate and duration must be positive")
        if self.background_noise_std < 0:
            raise ValidationError("background noise std must be nonnegative")
        if len(self.planted_edges) != self.classes:
            raise ValidationError("planted_edges must list one edge set per class")
        if len(self.band_profile) != self.classes:
            raise ValidationError("band_profile must list one profile per class")
        lo, hi = self.planted_freq_band
        if not (0 < lo < hi <= self.sample_rate_hz / 2):
            raise ValidationError("planted frequency band must sit below Nyquist")
        for edges in self.planted_edges:
            seen = set()
            for i, j, c in edges:
                if i == j or not (0 <= i < self.n_channels) or not (0 <= j < self.n_channels):
                    raise ValidationError(f"bad planted edge ({i}, {j})")
                if not (0 < c <= 1):
                    raise ValidationError("coupling strength must lie in (0, 1]")
                key = (min(i, j), max(i, j))
                if key in seen:
                    raise ValidationError(f"duplicate planted edge {key}")
                seen.add(key)
        signatures = [
            (frozenset((min(i, j), max(i, j), c) for i, j, c in edges), profile)
            for edges, profile in zip(self.planted_edges, self.band_profile)
        ]
        for a in range(self.classes):
            for b in range(a + 1, self.classes):
                if signatures[a] == signatures[b]:
                    raise ValidationError(
                        f"classes {a} and {b} differ in neither planted edges "
                        "nor band profile")

    @classmethod
    def from_settings(cls, s: CohortSettings, seed: int) -> "CohortSpec":
        return cls(
            n_channels=s.channels,
            classes=s.classes,
            subjects_per_class=s.subjects_per_class,
            sample_rate_hz=s.sample_rate_hz,
            duration_s=s.duration_s,
            planted_edges=default_planted_edges(
                s.channels, s.classes, s.planted_per_class, s.planted_coupling),
            planted_freq_band=(s.planted_freq_low, s.planted_freq_high),
            planted_amplitude=s.planted_amplitude,
            background_noise_std=s.background_noise_std,
            amplitude_jitter=s.amplitude_jitter,
            seed=seed,
        )


@dataclass
class LabeledCohort:
    """Recordings with labels, planted ground truth, and split assignments."""

    recordings: list[Recording]
    planted: dict[int, list[tuple[int, int]]]
    splits: dict[str, str] = field(default_factory=dict)
    sample_rate_hz: float = 0.0

    @property
    def n_classes(self) -> int:
        return max(rec.label for rec in self.recordings) + 1

    def subjects(self, split: str | None = None) -> list[Recording]:
        if split is None:
            return list(self.recordings)
        return [rec for rec in self.recordings
                if self.splits.get(rec.subject_id) == split]


def _synthesize_subject(spec: CohortSpec, label: int, subject_id: str,
                        seed: int) -> Recording:
    length = spec.n_samples
    t = np.arange(length) / spec.sample_rate_hz
    two_pi = 2.0 * np.pi
    samples = np.zeros((spec.n_channels, length))
    profile = spec.band_profile[label]
    jit = spec.amplitude_jitter

    for ch in range(spec.n_channels):
        draws = streams.uniform(3 * len(profile), 0.0, 1.0,
                                seed, streams.COHORT, subject_id, "chan", ch)
        for o, (freq, amp) in enumerate(profile):
            phase = two_pi * draws[3 * o]
            scale = amp * (1.0 - jit + 2.0 * jit * draws[3 * o + 1])
            shift = spec.freq_jitter_hz * (2.0 * draws[3 * o + 2] - 1.0)
            samples[ch] += scale * np.sin(two_pi * (freq + shift) * t + phase)
        if spec.background_noise_std > 0:
            samples[ch] += spec.background_noise_std * streams.normal(
                length, seed, streams.COHORT, subject_id, "bg", ch)

    lo, hi = spec.planted_freq_band
    for e_index, (i, j, coupling) in enumerate(spec.planted_edges[label]):
        draws = streams.uniform(3, 0.0, 1.0,
                                seed, streams.COHORT, subject_id, "edge", e_index)
        freq = lo + (hi - lo) * draws[0]
        phase = two_pi * draws[1]
        scale = spec.planted_amplitude * (1.0 - jit + 2.0 * jit * draws[2])
        latent = scale * np.sin(two_pi * freq * t + phase)
        samples[i] += coupling * latent
        samples[j] += coupling * latent

    return Recording(subject_id=subject_id, samples=samples,
                     sample_rate_hz=spec.sample_rate_hz, label=label,
                     channels=default_channel_names(spec.n_channels))


def generate_cohort(spec: CohortSpec, seed: int | None = None) -> LabeledCohort:
    """Deterministic cohort for (spec, seed); split assignment comes later via
    subject_split."""
    spec.validate()
    seed = spec.seed if seed is None else seed
    recordings = []
    for label in range(spec.classes):
        for k in range(spec.subjects_per_class):
            subject_id = f"c{label}s{k:03d}"
            recordings.append(_synthesize_subject(spec, label, subject_id, seed))
    planted = {label: [(min(i, j), max(i, j)) for i, j, _ in spec.planted_edges[label]]
               for label in range(spec.classes)}
    return LabeledCohort(recordings=recordings, planted=planted,
                         sample_rate_hz=spec.sample_rate_hz)


def add_noise(rec: Recording, sigma: float, seed: int) -> Recording:
    """Additive i.i.d. Gaussian noise (Box-Muller, counter-based stream keyed
    by subject and channel name); sigma = 0 is the identity."""
    if sigma < 0:
        raise ValidationError("sigma must be nonnegative")
    if sigma == 0.0:
        return replace(rec, samples=rec.samples.copy(),
                       channels=list(rec.channels))
    noisy = rec.samples.copy()
    for ch, name in enumerate(rec.channels):
        noisy[ch] += sigma * streams.normal(
            rec.n_samples, seed, streams.MEASURE_NOISE, rec.subject_id, name)
    return replace(rec, samples=noisy, channels=list(rec.channels))


def subject_split(cohort: LabeledCohort, train_fraction: float,
                  seed: int) -> LabeledCohort:
    """Stratified subject-independent split: floor(fraction * n_c) train
    subjects per class, the rest test."""
    if not (0.0 < train_fraction < 1.0):
        raise ValidationError("train_fraction must lie in (0, 1)")
    by_class: dict[int, list[str]] = {}
    for rec in cohort.recordings:
        by_class.setdefault(rec.label, []).append(rec.subject_id)
    splits: dict[str, str] = {}
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) < 2:
            raise ValidationError(
                f"class {label} has {len(ids)} subject(s); need >= 2 to split")
        order = streams.permutation(len(ids), seed, streams.SPLIT, label)
        n_train = int(np.floor(train_fraction * len(ids)))
        for pos, idx in enumerate(order):
            splits[ids[idx]] = "train" if pos < n_train else "test"
    return LabeledCohort(recordings=list(cohort.recordings),
                         planted=dict(cohort.planted), splits=splits,
                         sample_rate_hz=cohort.sample_rate_hz)
