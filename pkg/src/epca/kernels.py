"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise
(or when ``EPCA_KERNELS=python`` is set) the numpy versions are used. Both
backends expose the same two functions:

``l1_bisect(abs_values, gamma, eps, max_steps) -> (t, l1, steps)``
    Bisection for the soft-threshold level.
``varimax_value_grad(L) -> (value, grad)``
    Varimax criterion and its gradient with respect to ``L``.

The backends agree to rounding error (summation order differs), not bitwise.
"""

import os

import numpy as np

from . import _pykernels

_ext = None
if os.environ.get("EPCA_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "python"


def l1_bisect(a, gamma, eps, max_steps=200):
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    if _ext is not None:
        return _ext.l1_bisect(a, float(gamma), float(eps), int(max_steps))
    return _pykernels.l1_bisect(a, gamma, eps, max_steps)


def varimax_value_grad(L):
    L = np.ascontiguousarray(L, dtype=np.float64)
    if _ext is not None:
        return _ext.varimax_value_grad(L)
    return _pykernels.varimax_value_grad(L)


def python_backend():
    """The fallback kernel module, for benchmarks and cross-checks."""
    return _pykernels


def compiled_backend():
    """The compiled kernel module, or None if it was not built."""
    return _ext
