"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``MARSSL_PURE_PYTHON=1`` to force the fallback (read once, at import).
"""
import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("MARSSL_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py
    else:
        BACKEND = "cython"
else:
    _impl = _kernels_py

mahalanobis = _impl.mahalanobis
mixture_logpdf = _impl.mixture_logpdf

__all__ = ["BACKEND", "mahalanobis", "mixture_logpdf"]
