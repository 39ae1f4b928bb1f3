"""Deterministic random-stream derivation.

Every stochastic draw in a run comes from a stream keyed by the master seed
plus a purpose tag and the relevant coordinates (round, client, ...), so
results are bitwise reproducible and independent of execution order.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

__all__ = [
    "child_rng",
    "stable_cell_seed",
    "TAG_TASK",
    "TAG_SAMPLING",
    "TAG_GRAD",
    "TAG_OUTPUT",
]

TAG_TASK = 1
TAG_SAMPLING = 2
TAG_GRAD = 3
TAG_OUTPUT = 4


def child_rng(*keys: int) -> np.random.Generator:
    """Generator for the stream identified by an integer key path."""
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def stable_cell_seed(*parts: object) -> int:
    """Platform-independent seed derived from arbitrary JSON-serializable
    coordinates (preset name, grid cell, replicate index)."""
    payload = json.dumps(parts, sort_keys=True, default=str).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
