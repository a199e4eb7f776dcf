"""Deterministic derivation of RNG streams from one root seed.

Sub-seeds are the first 8 bytes of sha256("<root>:<label>"), so every
consumer (command name + purpose label) gets an independent, platform-stable
stream and reports are reproducible from a single --seed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(root_seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def derived_rng(root_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, label))
