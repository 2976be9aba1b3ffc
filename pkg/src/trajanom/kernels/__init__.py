"""Kernel backend selection.

Prefers the compiled extension, falls back to the numpy reference
implementations when the extension is absent or TRAJANOM_NO_EXT is set.
"""
import os

from . import reference

if os.environ.get("TRAJANOM_NO_EXT", "").strip().lower() in {"1", "true", "yes"}:
    _impl = reference
    BACKEND = "python"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = reference
        BACKEND = "python"

softmax = _impl.softmax
softmax_backward = _impl.softmax_backward
layer_norm = _impl.layer_norm
layer_norm_backward = _impl.layer_norm_backward
adam_update = _impl.adam_update


def backend_name() -> str:
    """Name of the active backend: "native" or "python"."""
    return BACKEND
