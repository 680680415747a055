"""Backend selection for the hot kernels.

The compiled Cython extension is preferred; the numpy/pure-Python fallback
is used when the extension is missing or when the environment variable
PHOTONSTAT_PURE_PYTHON is set to a non-empty value.  Both backends return
bit-identical results (all randomness lives outside the kernels), so the
choice only affects speed.
"""

import os

if os.environ.get("PHOTONSTAT_PURE_PYTHON"):
    from . import _fallback as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _fallback as _impl

        BACKEND = "python"

deadtime_filter = _impl.deadtime_filter
pair_product_hist = _impl.pair_product_hist


def backend() -> str:
    """Name of the active kernel backend ("compiled" or "python")."""
    return BACKEND
