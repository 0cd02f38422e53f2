"""Training loop, evaluation, ablations, band sweep, and explanation scoring.

One subject's whole recording is one dynamic-graph sequence (one sample);
mini-batches stack subjects. Mask noise is drawn from counter-based streams
keyed by (seed, epoch, subject index, pair position), batch order comes from a
per-epoch seeded permutation, and gradients reduce in sample order, so a run
is fully determined by (cohort, config, seed).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import streams
from .autodiff import Tape, add, backward, scalar_mul
from .cohort import LabeledCohort, add_noise
from .config import ModelConfig
from .errors import ConfigError, EmptyBandError, TrainingError, ValidationError
from .graphs import (BAND_NAMES, DynamicGraphSequence, WindowingSpec, band_for,
                     build_sequence, zscore_channels)
from .mask import (SparsityPrior, TemperatureSchedule, anneal, kl_sparsity,
                   salience_ranking)
from .metrics import MetricsReport, build_report
from .model import SeeGraphModel, cross_entropy
from .parallel import ordered_map


@dataclass
class PreparedSubject:
    subject_id: str
    label: int
    node_tokens: np.ndarray  # (N, T, d)
    adjacency: np.ndarray    # (T, N, N)


@dataclass
class PreparedDataset:
    subjects: list[PreparedSubject]
    train_idx: list[int]
    test_idx: list[int]
    feature_dim: int
    n_channels: int
    n_classes: int
    band: str

    def stack(self, indices) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.stack([self.subjects[i].node_tokens for i in indices])
        adj = np.stack([self.subjects[i].adjacency for i in indices])
        labels = np.array([self.subjects[i].label for i in indices])
        return x, adj, labels


def windowing_for(config: ModelConfig, sample_rate_hz: float) -> WindowingSpec:
    return WindowingSpec(
        window_samples=int(round(config.window_s * sample_rate_hz)),
        stride_samples=int(round(config.stride_s * sample_rate_hz)),
    )


def prepare_dataset(cohort: LabeledCohort, config: ModelConfig,
                    noise_sigma: float = 0.0) -> PreparedDataset:
    """z-score -> optional measurement noise -> dynamic graph sequences,
    arranged for the encoder. Raises EmptyBandError when the configured band
    retains no bins at this sample rate."""
    if not cohort.recordings:
        raise ValidationError("empty cohort")
    if not cohort.splits:
        raise ValidationError("cohort has no train/test split")
    rate = cohort.sample_rate_hz or cohort.recordings[0].sample_rate_hz
    band = band_for(config.band, rate)
    wspec = windowing_for(config, rate)
    mode = "spectral" if config.use_fft else "raw"

    def build(rec):
        scored = zscore_channels(rec)
        if noise_sigma > 0:
            scored = add_noise(scored, noise_sigma, config.seed)
        seq = build_sequence(scored, wspec, band, node_features=mode)
        return PreparedSubject(
            subject_id=rec.subject_id,
            label=rec.label,
            node_tokens=np.ascontiguousarray(np.transpose(seq.node_features, (1, 0, 2))),
            adjacency=seq.adjacency,
        )

    subjects = ordered_map(build, cohort.recordings)
    train_idx = [i for i, rec in enumerate(cohort.recordings)
                 if cohort.splits.get(rec.subject_id) == "train"]
    test_idx = [i for i, rec in enumerate(cohort.recordings)
                if cohort.splits.get(rec.subject_id) == "test"]
    if not train_idx or not test_idx:
        raise ValidationError("both train and test splits must be non-empty")
    return PreparedDataset(
        subjects=subjects,
        train_idx=train_idx,
        test_idx=test_idx,
        feature_dim=subjects[0].node_tokens.shape[2],
        n_channels=subjects[0].node_tokens.shape[0],
        n_classes=int(max(rec.label for rec in cohort.recordings)) + 1,
        band=band.name,
    )


def mask_noise_block(seed: int, epoch: int, subject_index: int,
                     n_channels: int) -> np.ndarray:
    """Logistic(0,1) noise for one subject's mask; position in the block is
    the pair index of the counter-based stream."""
    return streams.logistic((n_channels, n_channels),
                            seed, streams.MASK_NOISE, epoch, subject_index)


def offdiag_mean(matrix: np.ndarray) -> float:
    n = matrix.shape[-1]
    hollow = ~np.eye(n, dtype=bool)
    return float(matrix[..., hollow].mean())


def schedule_of(config: ModelConfig) -> TemperatureSchedule:
    return TemperatureSchedule(config.tau_start, config.tau_min, config.tau_decay)


def prior_of(config: ModelConfig) -> SparsityPrior:
    return SparsityPrior(retention=config.retention, epsilon=config.epsilon,
                         weight=config.effective_lambda)


def final_tau(config: ModelConfig) -> float:
    return anneal(schedule_of(config), config.epochs - 1)


def evaluate(model: SeeGraphModel, dataset: PreparedDataset, indices,
             tau: float, band: str | None = None):
    """Eval-mode forward over a split; returns (MetricsReport, per-subject
    eval masks and fused adjacencies for explanation export)."""
    indices = list(indices)
    if not indices:
        raise ValidationError("empty evaluation split")
    probs = []
    artifacts = []
    retention = []
    batch = max(1, model.config.batch)
    for start in range(0, len(indices), batch):
        chunk = indices[start:start + batch]
        x, adj, _ = dataset.stack(chunk)
        out = model.forward_batch(x, adj, mode="eval", tau=tau)
        probs.append(out.prediction.probabilities.data.copy())
        msym = out.mask.symmetrized.data
        abar = out.fused.fused_adjacency.data
        for row, idx in enumerate(chunk):
            artifacts.append({
                "index": idx,
                "subject_id": dataset.subjects[idx].subject_id,
                "label": dataset.subjects[idx].label,
                "mask": msym[row].copy(),
                "fused": abar[row].copy(),
            })
            retention.append(offdiag_mean(msym[row]))
    probabilities = np.concatenate(probs, axis=0)
    y_true = np.array([dataset.subjects[i].label for i in indices])
    report = build_report(y_true, probabilities, float(np.mean(retention)), band=band)
    for row, art in enumerate(artifacts):
        art["probabilities"] = probabilities[row].copy()
        art["predicted"] = int(probabilities[row].argmax())
    return report, artifacts


@dataclass
class TrainResult:
    model: SeeGraphModel
    report: MetricsReport
    runlog: list[dict]
    dataset: PreparedDataset
    config: ModelConfig
    artifacts: list[dict]


def train(cohort: LabeledCohort, config: ModelConfig, noise_sigma: float = 0.0,
          explain_k: int | None = None, step_callback=None) -> TrainResult:
    """Mini-batch Adam on the composite objective; eval-mode metrics on the
    test split every epoch; final report from the last epoch."""
    config = dataclasses.replace(config)
    config.validate()
    dataset = prepare_dataset(cohort, config, noise_sigma=noise_sigma)
    model = SeeGraphModel(config, dataset.feature_dim, dataset.n_channels,
                          dataset.n_classes)
    prior = prior_of(config)
    schedule = schedule_of(config)
    runlog: list[dict] = []
    report = None
    artifacts: list[dict] = []
    n = dataset.n_channels
    step = 0

    for epoch in range(config.epochs):
        tau = anneal(schedule, epoch)
        order = streams.permutation(len(dataset.train_idx),
                                    config.seed, streams.SHUFFLE, epoch)
        shuffled = [dataset.train_idx[i] for i in order]
        epoch_loss = []
        epoch_ce = []
        epoch_kl = []
        epoch_retention = []
        for start in range(0, len(shuffled), config.batch):
            chunk = shuffled[start:start + config.batch]
            x, adj, labels = dataset.stack(chunk)
            noise = np.stack([mask_noise_block(config.seed, epoch, idx, n)
                              for idx in chunk])
            with Tape() as tape:
                out = model.forward_batch(x, adj, mode="train", tau=tau,
                                          noise=noise)
                ce = cross_entropy(out.prediction, labels)
                kl = kl_sparsity(out.mask.symmetrized, prior)
                loss = add(ce, scalar_mul(kl, prior.weight)) if prior.weight else ce
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch}")
            grads = backward(tape, loss)
            model.store.adam_step(grads, config.lr)
            epoch_loss.append(loss_value)
            epoch_ce.append(float(ce.data))
            epoch_kl.append(float(kl.data))
            epoch_retention.append(offdiag_mean(out.mask.symmetrized.data))
            if step_callback is not None:
                step_callback({
                    "step": step,
                    "epoch": epoch,
                    "tau": tau,
                    "mask": out.mask.symmetrized.data.copy(),
                    "loss": loss_value,
                })
            step += 1

        report, artifacts = evaluate(model, dataset, dataset.test_idx, tau,
                                     band=dataset.band)
        runlog.append({
            "epoch": epoch,
            "loss": float(np.mean(epoch_loss)),
            "ce": float(np.mean(epoch_ce)),
            "kl": float(np.mean(epoch_kl)),
            "tau": tau,
            "retention": float(np.mean(epoch_retention)),
            "test_acc": report.accuracy,
        })

    if explain_k is not None and cohort.planted:
        report.precision_at_k = explanation_precision(artifacts, cohort.planted,
                                                      explain_k, n)
        report.extras["explain_k"] = explain_k
    return TrainResult(model=model, report=report, runlog=runlog,
                       dataset=dataset, config=config, artifacts=artifacts)


def explanation_precision(artifacts: list[dict], planted: dict[int, list],
                          k: int, n_channels: int) -> float:
    """Mean over subjects of |top-k salient edges ∩ planted(true class)| / k."""
    max_k = n_channels * (n_channels - 1) // 2
    if k < 1 or k > max_k:
        raise ConfigError(f"k must lie in [1, {max_k}]")
    scores = []
    for art in artifacts:
        truth = {(min(i, j), max(i, j)) for i, j in planted.get(art["label"], [])}
        ranked = salience_ranking(art["mask"], art["fused"])
        top = {(entry["i"], entry["j"]) for entry in ranked[:k]}
        scores.append(len(top & truth) / k)
    if not scores:
        raise ValidationError("no subjects to score explanations on")
    return float(np.mean(scores))


def explain_eval(model: SeeGraphModel, dataset: PreparedDataset,
                 planted: dict[int, list], k: int,
                 tau: float | None = None) -> float:
    """Explanation faithfulness on the test split (precision@k against the
    planted ground truth)."""
    tau = final_tau(model.config) if tau is None else tau
    _, artifacts = evaluate(model, dataset, dataset.test_idx, tau)
    return explanation_precision(artifacts, planted, k, dataset.n_channels)


def ablate(cohort: LabeledCohort, config: ModelConfig, switch: str,
           noise_sigma: float = 0.0) -> TrainResult:
    """Retrain with exactly one component switch off."""
    return train(cohort, config.ablated(switch), noise_sigma=noise_sigma)


def band_sweep(cohort: LabeledCohort, config: ModelConfig,
               noise_sigma: float = 0.0) -> dict[str, MetricsReport | None]:
    """Train and evaluate once per band with identical seeds; a band that
    retains no bins at this sample rate reports None (rendered NA)."""
    results: dict[str, MetricsReport | None] = {}
    for band in BAND_NAMES:
        run_config = dataclasses.replace(config, band=band)
        try:
            results[band] = train(cohort, run_config,
                                  noise_sigma=noise_sigma).report
        except EmptyBandError:
            results[band] = None
    return results
