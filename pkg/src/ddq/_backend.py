"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise, or
when ``DDQ_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
numpy fallback in ``_pykernels`` is used. Both expose the same four
functions with identical results.
"""

import os

from . import _pykernels


def _load():
    if os.environ.get("DDQ_PURE_PYTHON", "0") not in ("", "0"):
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels
    return _ckernels


kernels = _load()
BACKEND = kernels.NAME


def available_backends():
    """Map backend name to kernel module for every importable backend."""
    out = {_pykernels.NAME: _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out[_ckernels.NAME] = _ckernels
    return out
