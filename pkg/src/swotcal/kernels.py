"""Backend selection for the hot loops.

The Cython extension ``_ckernels`` is used when it has been built; otherwise the
numpy fallback in ``_pykernels`` is used. Set ``SWOTCAL_PURE_PYTHON=1`` to force
the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SWOTCAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

blur_columns = _impl.blur_columns
pad_replicate_cm = _impl.pad_replicate_cm
fold_replicate_cm = _impl.fold_replicate_cm

__all__ = ["BACKEND", "blur_columns", "pad_replicate_cm", "fold_replicate_cm"]
