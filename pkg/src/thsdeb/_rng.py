"""Seed streams: every random draw is a pure function of ``(seed, *keys)``."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

Seed = int | Sequence[int]


def _parts(seed: Seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    parts = tuple(int(s) for s in seed)
    if not parts:
        raise ValueError("empty seed sequence")
    return parts


def child_seed(seed: Seed, *keys: int) -> tuple[int, ...]:
    return _parts(seed) + tuple(int(k) for k in keys)


def stream(seed: Seed, *keys: int) -> np.random.Generator:
    """Independent generator for the sub-stream ``keys`` of ``seed``."""
    parts = child_seed(seed, *keys)
    ss = np.random.SeedSequence(parts[0], spawn_key=parts[1:])
    return np.random.Generator(np.random.PCG64(ss))
