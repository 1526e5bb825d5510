"""Kernel backend selection.

The compiled extension (_core) is preferred; the numpy reference
(_core_py) is the fallback and the ground truth for behavior.  Setting
RESOLAB_PURE_PYTHON=1 forces the fallback, which keeps every computation
runnable on installs without a C toolchain.
"""

from __future__ import annotations

import os

from . import _core_py

if os.environ.get("RESOLAB_PURE_PYTHON", "") == "1":
    _impl = _core_py
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _core_py

chebyshev_step = _impl.chebyshev_step
tridiag_solve_many = _impl.tridiag_solve_many


def backend_name() -> str:
    return _impl.BACKEND
