"""Deterministic random streams.

All randomness flows through Philox counter-based generators keyed by
SHA-256 digests, so a (seed, label) pair names the same stream on every
platform and independent sub-streams never overlap.
"""

from __future__ import annotations

import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def _digest(*parts) -> bytes:
    text = ":".join(str(p) for p in parts)
    return hashlib.sha256(text.encode("utf-8")).digest()


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 64-bit seed for a named run (used for per-run seeds in bench)."""
    return int.from_bytes(_digest(base_seed, *parts)[:8], "little")


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for one named role within a run."""
    key = int.from_bytes(_digest(seed, label)[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
