"""Named parameter tensors, Adam updates, and binary checkpoints.

Checkpoint layout: magic "SGWT", format version u16, then repeated records
{name length u16, name bytes, rank u8, dims u32..., f64 little-endian payload}.
"""

from __future__ import annotations

import struct

import numpy as np

from . import streams
from .autodiff import Gradients, Tensor
from .errors import FormatError, ValidationError

_MAGIC = b"SGWT"
_VERSION = 1


class ParameterStore:
    """Uniquely named learnable tensors plus per-parameter Adam state."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._step = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ValidationError(f"duplicate parameter name: {name!r}")
        tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._tensors[name] = tensor
        self._m[name] = np.zeros_like(tensor.data)
        self._v[name] = np.zeros_like(tensor.data)
        return tensor

    def add_dense(self, name: str, shape: tuple, fan_in: int, seed) -> Tensor:
        """Weight matrix initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
        bound = 1.0 / np.sqrt(float(fan_in))
        values = streams.uniform(shape, -bound, bound, seed, streams.INIT, name)
        return self.add(name, values)

    def add_zeros(self, name: str, shape: tuple) -> Tensor:
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def n_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def adam_step(self, grads: Gradients, lr: float,
                  beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        """One Adam update over every parameter, in insertion order."""
        self._step += 1
        t = self._step
        for name, tensor in self._tensors.items():
            g = grads.require(tensor)
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

    def save(self, path):
        save_checkpoint(path, {name: t.data for name, t in self._tensors.items()})

    def load(self, path):
        """Load a checkpoint into the existing parameters (shapes must match)."""
        loaded = load_checkpoint(path)
        missing = set(self._tensors) - set(loaded)
        extra = set(loaded) - set(self._tensors)
        if missing or extra:
            raise FormatError(
                f"checkpoint names do not match model (missing={sorted(missing)}, "
                f"unexpected={sorted(extra)})")
        for name, values in loaded.items():
            tensor = self._tensors[name]
            if values.shape != tensor.data.shape:
                raise FormatError(
                    f"checkpoint shape mismatch for {name!r}: "
                    f"{values.shape} vs {tensor.data.shape}")
            tensor.data[...] = values


def save_checkpoint(path, named_arrays: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        for name, values in named_arrays.items():
            raw = name.encode("utf-8")
            arr = np.asarray(values, dtype="<f8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes(order="C"))


def _read_exact(fh, count: int) -> bytes:
    blob = fh.read(count)
    if len(blob) != count:
        raise FormatError("truncated checkpoint")
    return blob


def load_checkpoint(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise FormatError("bad checkpoint magic")
        (version,) = struct.unpack("<H", _read_exact(fh, 2))
        if version != _VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise FormatError("truncated checkpoint")
            (name_len,) = struct.unpack("<H", head)
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            payload = _read_exact(fh, 8 * count)
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    return out
