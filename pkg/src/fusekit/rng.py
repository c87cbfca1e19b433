"""Deterministic random-number substreams.

Every stochastic choice in the toolkit (dataset sampling, weight init,
batch shuffling, per-trial seeds) draws from a substream derived by
hashing a root seed together with a purpose path, e.g.
``substream(7, "init", "l1.w")``. Distinct paths give independent
streams; the same path always gives the same stream. The generator
behind each substream is numpy's PCG64, seeded with the SHA-256 digest
of the path, which is what :data:`PRNG_ID` in run manifests refers to.
"""

from __future__ import annotations

import hashlib

import numpy as np

PRNG_ID = "pcg64-sha256-substream-v1"

_MASK64 = (1 << 64) - 1


def _digest(seed: int, path: tuple[str | int, ...]) -> bytes:
    parts = [str(int(seed) & _MASK64)]
    parts.extend(str(p) for p in path)
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()


def substream(seed: int, *path: str | int) -> np.random.Generator:
    """Return a fresh Generator for (seed, path), independent of call order."""
    entropy = int.from_bytes(_digest(seed, path), "little")
    return np.random.Generator(np.random.PCG64(entropy))


def derive_seed(seed: int, *path: str | int) -> int:
    """Collapse (seed, path) into a single u64, for APIs that take a seed."""
    return int.from_bytes(_digest(seed, path)[:8], "little")
