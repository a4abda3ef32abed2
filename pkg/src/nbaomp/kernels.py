"""Backend selection for the hot kernels.

The compiled extension is used when it was built and importable; otherwise the
numpy fallback is used. Set ``NBAOMP_PURE_PYTHON=1`` to force the fallback.
"""
import os

from nbaomp import _kernels_py

if os.environ.get("NBAOMP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from nbaomp import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"

fresnel_matrix = _impl.fresnel_matrix
gain_cells = _impl.gain_cells

__all__ = ["BACKEND", "fresnel_matrix", "gain_cells"]
