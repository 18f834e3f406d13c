"""Backend selection for the distance kernels.

The compiled extension is used when it imports; otherwise the numpy module
takes over. Set ``CROSSIM_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("CROSSIM_BACKEND", "").lower() == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

distances_to = _impl.distances_to
nearest = _impl.nearest
count_within = _impl.count_within
greedy_representatives = _impl.greedy_representatives
greedy_separated = _impl.greedy_separated
