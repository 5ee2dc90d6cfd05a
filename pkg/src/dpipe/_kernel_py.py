"""Pure-Python fallback for the hot kernels.

Semantics match dpipe._speedups exactly (same hash, same scores, same
wall-deadline spin), but the spin holds the GIL, so per-record compute does
not parallelize across thread lanes with this implementation.
"""

from __future__ import annotations

import time

IMPLEMENTATION = "pure"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def busy_wait_ms(duration_ms: float) -> None:
    """Burn CPU until ``duration_ms`` of wall time has elapsed."""
    if duration_ms <= 0:
        return
    deadline = time.perf_counter() + duration_ms / 1000.0
    while time.perf_counter() < deadline:
        pass


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a bytes-like value."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def score01(data: bytes) -> float:
    """Deterministic score in [0, 1) derived from the FNV-1a hash."""
    return fnv1a64(data) / 2.0**64
