"""Deterministic seed derivation."""
from __future__ import annotations

import hashlib


def sub_seed(seed: int, *keys) -> int:
    """Stable 63-bit seed derived from ``seed`` and arbitrary keys."""
    text = "|".join([str(int(seed))] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1
