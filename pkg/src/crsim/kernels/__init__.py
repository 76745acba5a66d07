"""Hot-loop propagators.

The compiled Cython kernel is used when it was built; otherwise the numpy
fallback is selected.  Set ``CRSIM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("CRSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _rk4 as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        BACKEND = "cython"
else:
    _compiled = None

rk4_propagate = _compiled.rk4_propagate if _compiled is not None else _fallback.rk4_propagate

__all__ = ["rk4_propagate", "BACKEND"]
