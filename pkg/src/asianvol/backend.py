"""Select the path-kernel backend at import time.

The compiled extension (asianvol._ckernels) is preferred; the numpy
implementation (asianvol._kernels_py) is the fallback.  Set
``ASIANVOL_BACKEND=py`` or ``ASIANVOL_BACKEND=c`` to force a choice —
forcing ``c`` raises if the extension is missing instead of silently
degrading.

State-dependent (local-vol) stepping always runs through the numpy kernel:
it needs a Python volatility callback per step.
"""

from __future__ import annotations

import os

from . import _kernels_py

path_stats_localvol = _kernels_py.path_stats_localvol

_forced = os.environ.get("ASIANVOL_BACKEND", "").strip().lower()

if _forced == "py":
    BACKEND = "python"
    path_stats = _kernels_py.path_stats
    path_stats_const = _kernels_py.path_stats_const
else:
    try:
        from . import _ckernels

        BACKEND = "compiled"
        path_stats = _ckernels.path_stats
        path_stats_const = _ckernels.path_stats_const
    except ImportError:
        if _forced == "c":
            raise ImportError(
                "ASIANVOL_BACKEND=c but the compiled extension "
                "asianvol._ckernels is not built"
            ) from None
        BACKEND = "python"
        path_stats = _kernels_py.path_stats
        path_stats_const = _kernels_py.path_stats_const
