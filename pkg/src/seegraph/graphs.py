"""Dynamic graph construction from multichannel recordings.

Per-channel z-scoring, overlapping windows, spectral node features (magnitudes
of the real-input DFT restricted to a frequency band, DC always excluded), and
absolute-Pearson adjacency per window. Windowed correlations run on the raw
z-scored samples for broadband, and on the band-limited reconstruction
(inverse transform of the retained bins) for named-band runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyBandError, InsufficientDataError, ValidationError
from .recordings import Recording

# Clinical band conventions (Hz). Broadband is everything below Nyquist.
BAND_EDGES = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 45.0),
}
BAND_NAMES = ("delta", "theta", "alpha", "beta", "gamma", "broadband")

_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class BandDefinition:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0.0 <= self.low_hz < self.high_hz):
            raise ConfigError(f"invalid band edges [{self.low_hz}, {self.high_hz})")


def band_for(name: str, sample_rate_hz: float) -> BandDefinition:
    if name == "broadband":
        return BandDefinition("broadband", 0.0, sample_rate_hz / 2.0)
    if name not in BAND_EDGES:
        raise ConfigError(f"unknown band {name!r}; expected one of {BAND_NAMES}")
    low, high = BAND_EDGES[name]
    return BandDefinition(name, low, high)


@dataclass(frozen=True)
class WindowingSpec:
    window_samples: int
    stride_samples: int

    def __post_init__(self):
        if self.window_samples < 8:
            raise ConfigError("window_samples must be >= 8")
        if not (0 < self.stride_samples <= self.window_samples):
            raise ConfigError("stride must be positive and <= window (overlapping windows)")


@dataclass
class DynamicGraphSequence:
    """Per-window node feature tensor X_(1:T) and adjacency tensor A_(1:T)."""

    node_features: np.ndarray  # (T, N, d)
    adjacency: np.ndarray      # (T, N, N)
    band: str

    @property
    def n_windows(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_channels(self) -> int:
        return self.node_features.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[2]

    def validate(self):
        T, N, _ = self.node_features.shape
        if self.adjacency.shape != (T, N, N):
            raise ValidationError("adjacency shape does not match node features")
        if not np.all(np.isfinite(self.node_features)) or not np.all(np.isfinite(self.adjacency)):
            raise ValidationError("non-finite values in graph sequence")
        if np.abs(self.adjacency - self.adjacency.transpose(0, 2, 1)).max() > 0:
            raise ValidationError("adjacency not symmetric")
        diags = self.adjacency[:, np.arange(N), np.arange(N)]
        if np.abs(diags).max() > 0:
            raise ValidationError("adjacency diagonal not zero")
        if self.adjacency.min() < 0 or self.adjacency.max() > 1:
            raise ValidationError("adjacency entries outside [0, 1]")


def zscore_channels(rec: Recording) -> Recording:
    """Per-channel zero mean / unit population std; constant channels map to
    all zeros."""
    if rec.n_samples < 2:
        raise ValidationError("need at least 2 samples to z-score")
    x = rec.samples
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    centered = x - mean
    scaled = np.where(std < _STD_FLOOR, 0.0, centered / np.where(std < _STD_FLOOR, 1.0, std))
    return Recording(subject_id=rec.subject_id, samples=scaled,
                     sample_rate_hz=rec.sample_rate_hz, label=rec.label,
                     channels=list(rec.channels))


def segment_windows(samples: np.ndarray, spec: WindowingSpec) -> np.ndarray:
    """Stack of T = floor((L - window)/stride) + 1 windows, each N x window.
    Trailing samples that do not fill a window are dropped."""
    n_samples = samples.shape[1]
    if n_samples < spec.window_samples:
        raise InsufficientDataError(
            f"{n_samples} samples < window of {spec.window_samples}")
    count = (n_samples - spec.window_samples) // spec.stride_samples + 1
    out = np.empty((count, samples.shape[0], spec.window_samples))
    for t in range(count):
        start = t * spec.stride_samples
        out[t] = samples[:, start:start + spec.window_samples]
    return out


def band_bins(window_samples: int, band: BandDefinition, sample_rate_hz: float) -> np.ndarray:
    """Indices of rFFT bins whose frequency lies in [low_hz, high_hz), DC
    excluded."""
    freqs = np.arange(window_samples // 2 + 1) * (sample_rate_hz / window_samples)
    keep = (freqs >= band.low_hz) & (freqs < band.high_hz)
    keep[0] = False
    return np.nonzero(keep)[0]


def spectral_features(window: np.ndarray, band: BandDefinition,
                      sample_rate_hz: float) -> np.ndarray:
    """Per-channel DFT magnitudes at the band's bins; shape (N, d)."""
    n_window = window.shape[1]
    if n_window < 8:
        raise ValidationError("window too short for spectral features")
    bins = band_bins(n_window, band, sample_rate_hz)
    if bins.size == 0:
        raise EmptyBandError(
            f"band {band.name} [{band.low_hz}, {band.high_hz}) retains no bins "
            f"at rate {sample_rate_hz}")
    spectrum = np.fft.rfft(window, axis=1)
    return np.abs(spectrum[:, bins])


def band_reconstruct(window: np.ndarray, band: BandDefinition,
                     sample_rate_hz: float) -> np.ndarray:
    """Inverse transform keeping only the band's bins (band-pass approximation
    used by the correlation stream on named-band runs)."""
    n_window = window.shape[1]
    bins = band_bins(n_window, band, sample_rate_hz)
    if bins.size == 0:
        raise EmptyBandError(f"band {band.name} retains no bins")
    spectrum = np.fft.rfft(window, axis=1)
    kept = np.zeros_like(spectrum)
    kept[:, bins] = spectrum[:, bins]
    return np.fft.irfft(kept, n=n_window, axis=1)


def amplitude_correlation(window: np.ndarray) -> np.ndarray:
    """Absolute Pearson correlation between channel pairs; zero diagonal,
    zero-variance channels correlate 0 with everything."""
    n_window = window.shape[1]
    if n_window < 2:
        raise ValidationError("need at least 2 samples per window")
    centered = window - window.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    safe = np.where(norms < _STD_FLOOR, 1.0, norms)
    unit = centered / safe[:, None]
    corr = np.abs(unit @ unit.T)
    corr[norms < _STD_FLOOR, :] = 0.0
    corr[:, norms < _STD_FLOOR] = 0.0
    np.clip(corr, 0.0, 1.0, out=corr)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 0.0)
    return corr


def build_sequence(rec: Recording, spec: WindowingSpec, band: BandDefinition,
                   node_features: str = "spectral") -> DynamicGraphSequence:
    """z-score -> segment -> per-window spectral features and absolute-Pearson
    adjacency. node_features="raw" keeps windowed time samples as features
    (the spectral-features-off ablation)."""
    if node_features not in ("spectral", "raw"):
        raise ConfigError(f"unknown node_features mode {node_features!r}")
    scored = zscore_channels(rec)
    windows = segment_windows(scored.samples, spec)
    feats = []
    adjs = []
    for t in range(windows.shape[0]):
        win = windows[t]
        if node_features == "spectral":
            feats.append(spectral_features(win, band, rec.sample_rate_hz))
        else:
            feats.append(win.copy())
        corr_input = win if band.name == "broadband" else band_reconstruct(
            win, band, rec.sample_rate_hz)
        adjs.append(amplitude_correlation(corr_input))
    seq = DynamicGraphSequence(node_features=np.stack(feats),
                               adjacency=np.stack(adjs), band=band.name)
    seq.validate()
    return seq


def feature_dim(window_samples: int, band: BandDefinition, sample_rate_hz: float,
                node_features: str = "spectral") -> int:
    """Node feature dimensionality for a fixed windowing/band configuration."""
    if node_features == "raw":
        return window_samples
    bins = band_bins(window_samples, band, sample_rate_hz)
    if bins.size == 0:
        raise EmptyBandError(f"band {band.name} retains no bins")
    return int(bins.size)
