"""Shared helpers: deterministic rounding and seed derivation."""

from __future__ import annotations

import math
import zlib

import numpy as np


def round_half_up(value: float) -> int:
    """Round a non-negative real to the nearest integer, halves up."""
    if value < 0:
        raise ValueError(f"round_half_up expects a non-negative value, got {value}")
    return int(math.floor(value + 0.5))


def _as_u32(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"seed parts must be non-negative, got {part}")
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"seed part must be int or str, got {type(part)!r}")


def seed_sequence(base_seed: int, *parts) -> np.random.SeedSequence:
    """Stable SeedSequence for (base_seed, *parts); same result on every platform."""
    return np.random.SeedSequence(entropy=_as_u32(base_seed), spawn_key=tuple(_as_u32(p) for p in parts))


def rng_for(base_seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(base_seed, *parts))


def int_seed_for(base_seed: int, *parts) -> int:
    """A derived 32-bit seed, e.g. for torch.manual_seed."""
    return int(seed_sequence(base_seed, *parts).generate_state(1)[0])
