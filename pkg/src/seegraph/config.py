"""Model and run configuration.

Everything the architecture leaves open lives in ModelConfig with explicit
defaults (these are this artifact's choices). RunConfig adds cohort-generation
and run-level settings and round-trips through a key=value text file; unknown
keys are rejected and every run persists its fully resolved config next to its
outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError, UsageError

ABLATION_SWITCHES = ("cwise", "pe", "sr", "fft")


@dataclass
class ModelConfig:
    dim: int = 32
    heads: int = 4
    d_pe: int = 4
    gat_layers: int = 2
    gat_hidden: int = 32
    retention: float = 0.15
    epsilon: float = 1e-8
    lambda_kl: float = 1.0
    tau_start: float = 5.0
    tau_min: float = 0.5
    tau_decay: float = 0.9
    window_s: float = 1.0
    stride_s: float = 0.5
    band: str = "broadband"
    lr: float = 1e-3
    epochs: int = 60
    batch: int = 8
    seed: int = 1
    use_cwise: bool = True
    use_pe: bool = True
    use_sr: bool = True
    use_fft: bool = True
    zero_threshold: float = 1e-8
    export_threshold: float = 0.0

    def validate(self) -> "ModelConfig":
        if self.dim <= 0 or self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} must be positive and divisible by heads {self.heads}")
        if self.d_pe < 1:
            raise ConfigError("d_pe must be >= 1")
        if self.gat_layers < 1 or self.gat_hidden < 1:
            raise ConfigError("need at least one GAT layer with positive width")
        if not (0.0 < self.retention < 1.0):
            raise ConfigError("retention must lie in (0, 1)")
        if not (0.0 < self.epsilon <= 1e-6):
            raise ConfigError("epsilon must lie in (0, 1e-6]")
        if self.lambda_kl < 0:
            raise ConfigError("lambda_kl must be nonnegative")
        if self.tau_min <= 0 or self.tau_start < self.tau_min:
            raise ConfigError("need tau_start >= tau_min > 0")
        if not (0.0 < self.tau_decay <= 1.0):
            raise ConfigError("tau_decay must lie in (0, 1]")
        if self.window_s <= 0 or not (0 < self.stride_s <= self.window_s):
            raise ConfigError("need 0 < stride_s <= window_s")
        if self.lr <= 0 or self.epochs < 1 or self.batch < 1:
            raise ConfigError("lr, epochs, batch must be positive")
        if self.export_threshold < 0:
            raise ConfigError("export_threshold must be nonnegative")
        return self

    @property
    def effective_lambda(self) -> float:
        """KL weight actually applied; zero when the sparsity regularizer is
        ablated."""
        return self.lambda_kl if self.use_sr else 0.0

    @property
    def pe_width(self) -> int:
        return self.d_pe if self.use_pe else 0

    def ablated(self, switch: str) -> "ModelConfig":
        """Copy with exactly one component switch turned off."""
        if switch not in ABLATION_SWITCHES:
            raise ConfigError(f"unknown ablation switch {switch!r}; "
                              f"expected one of {ABLATION_SWITCHES}")
        return dataclasses.replace(self, **{f"use_{switch}": False})


@dataclass
class CohortSettings:
    """Synthetic-cohort generation knobs (see cohort.CohortSpec)."""

    channels: int = 16
    classes: int = 2
    subjects_per_class: int = 40
    sample_rate_hz: float = 100.0
    duration_s: float = 30.0
    background_noise_std: float = 0.5
    planted_per_class: int = 6
    planted_coupling: float = 0.8
    planted_amplitude: float = 2.2
    planted_freq_low: float = 8.0
    planted_freq_high: float = 13.0
    amplitude_jitter: float = 0.1
    train_fraction: float = 0.8


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    cohort: CohortSettings = field(default_factory=CohortSettings)
    noise_sigma: float = 0.0
    top_k: int = 6

    def validate(self) -> "RunConfig":
        self.model.validate()
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if not (0.0 < self.cohort.train_fraction < 1.0):
            raise ConfigError("train_fraction must lie in (0, 1)")
        return self


def _field_types(cls) -> dict[str, type]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


_MODEL_FIELDS = {f.name for f in dataclasses.fields(ModelConfig)}
_COHORT_FIELDS = {f.name for f in dataclasses.fields(CohortSettings)}
_RUN_FIELDS = {"noise_sigma", "top_k"}


def _parse_value(raw: str, current) -> object:
    if isinstance(current, bool):
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw.strip()


def apply_setting(config: RunConfig, key: str, raw: str):
    """Set one key=value pair; unknown keys are rejected."""
    try:
        if key in _MODEL_FIELDS:
            setattr(config.model, key, _parse_value(raw, getattr(config.model, key)))
        elif key in _COHORT_FIELDS:
            setattr(config.cohort, key, _parse_value(raw, getattr(config.cohort, key)))
        elif key in _RUN_FIELDS:
            setattr(config, key, _parse_value(raw, getattr(config, key)))
        else:
            raise UsageError(f"unknown config key {key!r}")
    except ValueError as exc:
        raise UsageError(f"bad value for {key!r}: {raw!r} ({exc})") from exc


def load_config(path) -> RunConfig:
    """Parse a key = value config file ('#' starts a comment)."""
    config = RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        apply_setting(config, key.strip(), raw.strip())
    return config


def dump_config(config: RunConfig) -> str:
    """Serialize a fully resolved config in the same key = value format."""
    lines = ["# resolved run configuration"]
    for section in (config.model, config.cohort):
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {getattr(section, f.name)}")
    lines.append(f"noise_sigma = {config.noise_sigma}")
    lines.append(f"top_k = {config.top_k}")
    return "\n".join(lines) + "\n"
