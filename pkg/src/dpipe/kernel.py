"""Kernel selection: compiled extension when available, pure Python otherwise.

Set DPIPE_PURE_KERNEL=1 to force the pure-Python implementation (used by the
kernel benchmark and the fallback tests).
"""

from __future__ import annotations

import os

if os.environ.get("DPIPE_PURE_KERNEL") == "1":
    from . import _kernel_py as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernel_py as _impl

IMPLEMENTATION: str = _impl.IMPLEMENTATION
busy_wait_ms = _impl.busy_wait_ms
fnv1a64 = _impl.fnv1a64
score01 = _impl.score01

__all__ = ["IMPLEMENTATION", "busy_wait_ms", "fnv1a64", "score01"]
