"""Recording container, binary recording files, and cohort manifests.

Recording file layout: magic "SGRC", version u16, subject-id length u16 +
bytes, label u16, n_channels u32, n_samples u64, sample_rate f64, then
channel-major f64 little-endian samples. The format carries no channel names;
loading assigns canonical ch00..chNN names.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

_MAGIC = b"SGRC"
_VERSION = 1


def default_channel_names(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"ch{i:0{width}d}" for i in range(n)]


@dataclass
class Recording:
    """One subject's multichannel signal with sampling rate and class label."""

    subject_id: str
    samples: np.ndarray  # (n_channels, n_samples) float64
    sample_rate_hz: float
    label: int
    channels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValidationError("samples must be a channels x samples matrix")
        if not self.channels:
            self.channels = default_channel_names(self.samples.shape[0])
        self.validate()

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def validate(self):
        if self.n_channels < 2:
            raise ValidationError(f"need >= 2 channels, got {self.n_channels}")
        if self.sample_rate_hz <= 0:
            raise ValidationError("sample_rate_hz must be positive")
        if self.label < 0:
            raise ValidationError("label must be a nonnegative class index")
        if len(self.channels) != self.n_channels:
            raise ValidationError("channel name count mismatch")

    def permuted(self, order) -> "Recording":
        """Reorder channels (rows and names move together)."""
        order = list(order)
        return Recording(
            subject_id=self.subject_id,
            samples=self.samples[order].copy(),
            sample_rate_hz=self.sample_rate_hz,
            label=self.label,
            channels=[self.channels[i] for i in order],
        )


def save_recording(rec: Recording, path):
    sid = rec.subject_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<H", len(sid)))
        fh.write(sid)
        fh.write(struct.pack("<H", rec.label))
        fh.write(struct.pack("<I", rec.n_channels))
        fh.write(struct.pack("<Q", rec.n_samples))
        fh.write(struct.pack("<d", rec.sample_rate_hz))
        fh.write(np.ascontiguousarray(rec.samples, dtype="<f8").tobytes())


def _read_exact(fh, count: int) -> bytes:
    blob = fh.read(count)
    if len(blob) != count:
        raise FormatError("truncated recording file")
    return blob


def load_recording(path) -> Recording:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise FormatError("bad recording magic")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != _VERSION:
            raise FormatError(f"unsupported recording version {version}")
        (sid_len,) = struct.unpack("<H", _read_exact(fh, 2))
        subject_id = _read_exact(fh, sid_len).decode("utf-8")
        (label,) = struct.unpack("<H", _read_exact(fh, 2))
        (n_channels,) = struct.unpack("<I", _read_exact(fh, 4))
        (n_samples,) = struct.unpack("<Q", _read_exact(fh, 8))
        (rate,) = struct.unpack("<d", _read_exact(fh, 8))
        payload = _read_exact(fh, 8 * n_channels * n_samples)
        if fh.read(1):
            raise FormatError("trailing bytes after recording payload")
    samples = np.frombuffer(payload, dtype="<f8").reshape(n_channels, n_samples).copy()
    return Recording(subject_id=subject_id, samples=samples,
                     sample_rate_hz=rate, label=label)


# ---------------------------------------------------------------------------
# cohort manifest
# ---------------------------------------------------------------------------

def write_manifest(path, subjects: list[dict], planted: dict | None = None,
                   meta: dict | None = None):
    """Manifest: one JSON document listing {subject_id, path, label, split},
    plus planted ground-truth edges when the cohort is synthetic."""
    doc = {"version": 1, "subjects": subjects}
    if planted is not None:
        doc["planted"] = {str(k): [list(edge) for edge in v] for k, v in planted.items()}
    if meta:
        doc.update(meta)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest: {exc}") from exc
    if "subjects" not in doc:
        raise FormatError("manifest missing 'subjects'")
    for entry in doc["subjects"]:
        for key in ("subject_id", "path", "label", "split"):
            if key not in entry:
                raise FormatError(f"manifest subject entry missing {key!r}")
    if "planted" in doc:
        doc["planted"] = {int(k): [tuple(e) for e in v] for k, v in doc["planted"].items()}
    return doc
