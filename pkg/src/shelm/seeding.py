"""Deterministic seed derivation helpers.

All randomness in the package flows through numpy Generators (or torch
Generators for network weights) seeded via these helpers, so that a run is
fully determined by its master seed plus a handful of string labels.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stable_hash64(*parts: str | int) -> int:
    """Map a tuple of strings/ints to a stable 64-bit integer.

    Unlike builtin hash(), the result is identical across processes and
    platforms.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little") & _MASK64


def rng_for(*parts: str | int) -> np.random.Generator:
    """A fresh PCG64 generator deterministically derived from the parts."""
    return np.random.Generator(np.random.PCG64(stable_hash64(*parts)))
