"""Hot loops: AR(1) recursion and persistence indicators.

The compiled extension is used when it was built; otherwise, or when
``EXTENTLAB_PURE_PYTHON=1`` is set, the numpy fallback is used.  ``BACKEND``
names the active implementation.
"""
import os

from . import _pykernels

if os.environ.get("EXTENTLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"
ar1_anomalies = _impl.ar1_anomalies
persist_indicator = _impl.persist_indicator

__all__ = ["BACKEND", "ar1_anomalies", "persist_indicator"]
