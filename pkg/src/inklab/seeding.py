"""Deterministic seed fan-out.

One master seed drives a whole experiment. Component seeds are derived by
mixing the master seed with string tags and integer indices through
splitmix64, so the seed for (component, task, fold) never depends on
evaluation order or worker scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One step of the splitmix64 mixer (public-domain constants)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _mix(acc: int, value: int) -> int:
    return splitmix64((acc ^ (value & _MASK)) & _MASK)


def child_seed(master: int, *tags) -> int:
    """Derive a 63-bit child seed from the master seed and a tag path.

    Tags may be ints or strings; strings are hashed bytewise so the
    derivation is stable across runs and platforms.
    """
    acc = splitmix64(int(master) & _MASK)
    for tag in tags:
        if isinstance(tag, str):
            acc = _mix(acc, 0x5354524947 ^ len(tag))
            for b in tag.encode("utf-8"):
                acc = _mix(acc, b)
        else:
            acc = _mix(acc, int(tag))
    return acc >> 1  # keep it positive for APIs that want signed ints


def rng_for(master: int, *tags) -> np.random.Generator:
    """Fresh numpy Generator for a derived seed path."""
    return np.random.default_rng(child_seed(master, *tags))
