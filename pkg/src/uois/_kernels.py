"""Kernel backend selection.

The compiled extension is preferred; set ``UOIS_PURE_PYTHON=1`` to force the
numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("UOIS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

bin_intervals = _impl.bin_intervals
cone_votes = _impl.cone_votes
span_votes = _impl.span_votes


def backends() -> dict:
    """All importable backends by name, for tests and benchmarks."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
