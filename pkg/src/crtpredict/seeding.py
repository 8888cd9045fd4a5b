"""Deterministic seed derivation: one master seed fans out to all components."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts: object) -> int:
    """Derive a 32-bit component seed from a master seed and a role path.

    The derivation is sha256 over "master:part1:part2:...", so any component
    seed is stable across runs and platforms.  32 bits keeps the value usable
    by every RNG in play (numpy, torch, sklearn's legacy RandomState).
    """
    msg = ":".join([str(master), *(str(p) for p in parts)])
    digest = hashlib.sha256(msg.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
