"""Kernel backend selection: compiled extension if available, else pure Python.

Set ``LORAHOP_PURE=1`` to force the fallback (used by the benchmark and the
backend-equivalence tests).
"""

import os

if os.environ.get("LORAHOP_PURE", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

positions_at = _impl.positions_at
link_scan = _impl.link_scan


def backend_name() -> str:
    return _impl.BACKEND
