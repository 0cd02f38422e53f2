"""Counter-based random streams.

Every random draw in the package comes from a Philox counter-based generator
keyed by a hashed tuple such as (seed, domain, subject, channel). Streams are
independent of evaluation order, so parallel and serial runs draw identical
values, and any position of a stream can be regenerated in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Domain tags keep unrelated stream families from colliding.
INIT = "init"
MASK_NOISE = "mask"
COHORT = "cohort"
MEASURE_NOISE = "noise"
SHUFFLE = "shuffle"
SPLIT = "split"

_SEP = "\x1f"
_UNIT = np.float64(2 ** -53)


def _key_digest(parts) -> np.ndarray:
    text = _SEP.join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()
    return np.frombuffer(digest, dtype="<u8").copy()


def generator(*parts) -> np.random.Generator:
    """A fresh Philox generator for the stream keyed by `parts`."""
    return np.random.Generator(np.random.Philox(key=_key_digest(parts)))


def uniform_open(size, *parts) -> np.ndarray:
    """Uniforms in the open interval (0, 1); safe for log transforms."""
    u = generator(*parts).random(size)
    # random() lives in [0, 1); clamp the single excluded endpoint region.
    return np.clip(u, _UNIT, 1.0 - _UNIT)


def logistic(size, *parts) -> np.ndarray:
    """Standard Logistic(0, 1) noise: log(u) - log(1 - u)."""
    u = uniform_open(size, *parts)
    return np.log(u) - np.log1p(-u)


def normal(size, *parts) -> np.ndarray:
    """Standard Gaussian noise via Box-Muller on the uniform stream."""
    n = int(np.prod(size)) if not np.isscalar(size) else int(size)
    pairs = (n + 1) // 2
    u = uniform_open(2 * pairs, *parts)
    u1, u2 = u[:pairs], u[pairs:]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]
    return z.reshape(size) if not np.isscalar(size) else z


def uniform(size, low: float, high: float, *parts) -> np.ndarray:
    return low + (high - low) * uniform_open(size, *parts)


def permutation(n: int, *parts) -> np.ndarray:
    return generator(*parts).permutation(n)
