"""Select the kernel backend at import time.

``LAYERPOT_BACKEND=python`` forces the numpy fallback, ``cython`` requires the
compiled extension, anything else (default ``auto``) prefers the extension
when it is importable.
"""
import os

import numpy as np

from . import _kernels_py

_choice = os.environ.get("LAYERPOT_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
    NAME = "python"
else:
    try:
        from . import _speedups as _impl

        NAME = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _kernels_py
        NAME = "python"


def _rows(a):
    return np.ascontiguousarray(a, dtype=float)


def principal_dl(z, nu_y, a2inv, scale):
    z, nu_y = np.broadcast_arrays(z, nu_y)
    shape = z.shape[:-1]
    n = z.shape[-1]
    out = _impl.principal_dl(_rows(z.reshape(-1, n)), _rows(nu_y.reshape(-1, n)), _rows(a2inv), float(scale))
    return out.reshape(shape)


def principal_tangential(z, nu_x, nu_y, a2inv, scale):
    z, nu_x, nu_y = np.broadcast_arrays(z, nu_x, nu_y)
    shape = z.shape
    n = shape[-1]
    J1, J2 = _impl.principal_tangential(
        _rows(z.reshape(-1, n)), _rows(nu_x.reshape(-1, n)), _rows(nu_y.reshape(-1, n)), _rows(a2inv), float(scale)
    )
    return J1.reshape(shape), J2.reshape(shape)


def riesz(z, h):
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    return _impl.riesz(_rows(z.reshape(-1, n)), int(h)).reshape(z.shape[:-1])
