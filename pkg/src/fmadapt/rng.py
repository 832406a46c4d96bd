"""Seeded randomness.

All draws come from numpy's Philox4x64 counter-based generator.  A purpose
label (e.g. ``"specaug"`` or an utterance id) is folded into the top-level
seed with a 64-bit FNV-1a hash and XOR, so every consumer gets an
independent, reproducible stream.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK
    return h


def derive_seed(seed: int, *labels) -> int:
    s = int(seed) & _MASK
    for label in labels:
        s ^= fnv1a64(str(label))
        s = (s * _FNV_PRIME) & _MASK
    return s


def generator(seed: int, *labels) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(seed, *labels) if labels else int(seed) & _MASK))
