"""Select the kernel implementation at import time.

The compiled Cython module is preferred; ``ENTANGLEKIT_PURE_PYTHON=1``
forces the numpy fallback (useful for debugging and benchmarking).
"""

import importlib
import os

from . import _pykernels


def _compiled():
    try:
        return importlib.import_module("entanglekit._kernels")
    except ImportError:
        return None


def get_backend(name=None):
    """Return the kernel module called ``name`` ("compiled" or "python").

    With no name, the preferred available backend is returned.
    """
    if name == "python":
        return _pykernels
    mod = _compiled()
    if name == "compiled":
        if mod is None:
            raise ImportError("compiled kernels are not built (run `pip install -e .`)")
        return mod
    if name is not None:
        raise ValueError(f"unknown backend {name!r}")
    return mod if mod is not None else _pykernels


if os.environ.get("ENTANGLEKIT_PURE_PYTHON") == "1":
    kernels = _pykernels
else:
    kernels = get_backend()

BACKEND = kernels.BACKEND
