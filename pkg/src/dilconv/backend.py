"""Kernel backend selection.

Both backends provide ``im2col``, ``col2im`` and a row-stable ``matmul`` and
produce bitwise-identical results.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``DILCONV_BACKEND=python`` to force the fallback, or ``cython`` to fail
loudly when the extension is missing.
"""
import os
from types import SimpleNamespace

import numpy as np

from . import _fallback

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = {"python": SimpleNamespace(name="python", im2col=_fallback.im2col, col2im=_fallback.col2im,
                                      matmul=_fallback.matmul)}
if _kernels is not None:
    BACKENDS["cython"] = SimpleNamespace(name="cython", im2col=_kernels.im2col, col2im=_kernels.col2im,
                                         matmul=_kernels.matmul)


def get_backend(name="auto"):
    if name == "auto":
        return BACKENDS.get("cython", BACKENDS["python"])
    try:
        return BACKENDS[name]
    except KeyError:
        raise ImportError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None


kernels = get_backend(os.environ.get("DILCONV_BACKEND", "auto"))


def matmul(a, b):
    """``a @ b`` through the active backend; each output row depends only on its input row."""
    return kernels.matmul(np.ascontiguousarray(a, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64))
