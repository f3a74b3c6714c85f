"""
Backend selection for the coupled-observer kernel.

The compiled extension is used when it imports; ``DISTATT_KERNELS=python``
forces the NumPy implementation. :data:`BACKEND` names the active one.
"""

import os

from . import _pykernels

_forced = os.environ.get("DISTATT_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _pykernels
        BACKEND = "python"

CoupledKernel = _impl.CoupledKernel
PyCoupledKernel = _pykernels.CoupledKernel


def compiled_kernel():
    """The compiled ``CoupledKernel`` class, or None if the extension is missing."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels.CoupledKernel
