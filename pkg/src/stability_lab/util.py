"""Small shared helpers: thread cap, canonical number formatting."""

from __future__ import annotations

import os

import numpy as np

THREADS_ENV = "STABILITY_LAB_THREADS"


def thread_count() -> int:
    """Worker cap for parallel loops; defaults to 1 (serial)."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def format_sig(value, digits: int = 12) -> str:
    """Fixed significant-digit decimal rendering for reproducible diffs."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{digits}g}"
    return str(value)


def canonical(obj):
    """Recursively round floats to 12 significant digits for stable JSON."""
    if isinstance(obj, dict):
        return {str(key): canonical(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(item) for item in obj]
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.12g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    return obj
