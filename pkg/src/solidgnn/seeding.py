"""Deterministic seed derivation for independent random streams."""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "rng_from"]


def derive_seed(*parts: int) -> int:
    """Collapse integer tags into one well-mixed 64-bit seed."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


def rng_from(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))
