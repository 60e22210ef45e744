"""Hot-loop kernels with backend selection at import.

The compiled Cython module is used when it was built; otherwise the NumPy
fallback is loaded.  Setting ``ELLIPTICLAB_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _fallback

fallback = _fallback

if os.environ.get("ELLIPTICLAB_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else _fallback
BACKEND = "cython" if compiled is not None else "python"

csr_matvec = _impl.csr_matvec
segment_sum = _impl.segment_sum
holder_max = _impl.holder_max

__all__ = ["BACKEND", "compiled", "fallback", "csr_matvec", "segment_sum",
           "holder_max"]
