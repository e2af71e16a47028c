"""Deterministic random-number derivation.

Every stochastic component draws from a Philox stream keyed by a
(seed, purpose, ...) path hashed to a 128-bit key, so each consumer gets an
independent, reproducible stream and reruns are bit-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key128(parts: tuple) -> np.ndarray:
    digest = hashlib.sha256(repr(parts).encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def generator(*parts) -> np.random.Generator:
    """Fresh Generator for the given derivation path (ints or strings)."""
    return np.random.Generator(np.random.Philox(key=_key128(parts)))


def derive_seed(*parts) -> int:
    """Stable 32-bit integer seed derived from the path."""
    digest = hashlib.sha256(repr(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def dropout_mask(shape, p: float, key: tuple) -> np.ndarray:
    """Keep-mask scaled by 1/(1-p); a pure function of (key, shape, p)."""
    u = generator(*key, "dropout").random(shape)
    return (u >= p).astype(np.float64) / (1.0 - p)
