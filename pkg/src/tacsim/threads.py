"""Worker-thread control for the numba kernels.

All parallel kernels in this package are gather-style (every output slot is
written by exactly one loop iteration, accumulation order fixed by data
layout), so results are bit-identical for any thread count. The env var
TACSIM_THREADS picks the count at CLI startup; callers may also set it
programmatically for A/B determinism checks.
"""
import os

import numba


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS


def set_threads(n: int) -> int:
    """Clamp n to [1, startup maximum] and apply it. Returns the value used."""
    n = max(1, min(int(n), max_threads()))
    numba.set_num_threads(n)
    return n


def threads_from_env() -> int:
    """Apply TACSIM_THREADS if set; otherwise leave numba's default."""
    raw = os.environ.get("TACSIM_THREADS")
    if raw is None:
        return numba.get_num_threads()
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"TACSIM_THREADS must be an integer, got {raw!r}")
    return set_threads(n)
