"""Scan-kernel backend selection.

The compiled Cython kernel is preferred when the extension built; the numpy
twin is the fallback. ICEMAMBA_PURE_PY=1 forces the fallback (used by the
benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

from . import _scan_np

if os.environ.get("ICEMAMBA_PURE_PY"):
    _impl = _scan_np
    COMPILED = False
else:
    try:
        from . import _scan_cy as _impl  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        _impl = _scan_np
        COMPILED = False


def backend_name() -> str:
    return "cython" if COMPILED else "numpy"


scan_forward = _impl.scan_forward
scan_backward = _impl.scan_backward
numpy_scan_forward = _scan_np.scan_forward
numpy_scan_backward = _scan_np.scan_backward
