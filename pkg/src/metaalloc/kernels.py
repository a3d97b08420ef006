"""Backend selection for the grid kernels.

The compiled module is used when it imports; set ``METAALLOC_PURE_PYTHON=1``
to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
grid_tables = _kernels_py.grid_tables
grid_select = _kernels_py.grid_select

if os.environ.get("METAALLOC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        grid_tables = _compiled.grid_tables
        grid_select = _compiled.grid_select


def backends() -> dict:
    """All importable backends, keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        return out
    out["cython"] = _kernels
    return out
