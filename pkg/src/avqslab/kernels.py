"""Backend selection for the hot loops.

The compiled extension is used when it imports; ``AVQSLAB_PURE=1`` forces the
numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("AVQSLAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

divergence_gap_scan = _impl.divergence_gap_scan
orbit_mean = _impl.orbit_mean
orbit_values = _impl.orbit_values


def backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    from . import _ckernels
    return _ckernels
