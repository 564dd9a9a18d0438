"""Backend selection for the LSTM recurrence kernels.

The compiled extension is used when it imports; set ``UAVPOWER_BACKEND=python``
to force the numpy implementation.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
recurrence_forward = _fallback.recurrence_forward
recurrence_backward = _fallback.recurrence_backward

if os.environ.get("UAVPOWER_BACKEND", "").lower() not in ("python", "numpy"):
    try:
        from . import _lstm_kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        recurrence_forward = _compiled.recurrence_forward
        recurrence_backward = _compiled.recurrence_backward


def available_backends() -> dict:
    """Mapping of backend name to ``(forward, backward)`` kernel pairs."""
    out = {"python": (_fallback.recurrence_forward, _fallback.recurrence_backward)}
    try:
        from . import _lstm_kernels as compiled
    except ImportError:
        return out
    out["cython"] = (compiled.recurrence_forward, compiled.recurrence_backward)
    return out
