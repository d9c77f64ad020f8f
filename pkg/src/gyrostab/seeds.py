"""Reproducible child-seed derivation for parallel experiment runs.

Every randomized stage (weight init, shuffling, IMU noise, sweep cells) gets
its seed from ``child_seed(master, label, index)``.  The scheme is a SHA-256
hash of ``"{master}|{label}|{index}"`` truncated to 63 bits, so child streams
are independent, stable across processes and platforms, and any single sweep
cell can be re-run in isolation from the values recorded in a manifest.
"""

from __future__ import annotations

import hashlib


def child_seed(master: int, label: str, index: int = 0) -> int:
    """Derive a deterministic 63-bit child seed from a master seed."""
    token = f"{master}|{label}|{index}".encode("utf-8")
    digest = hashlib.sha256(token).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF
