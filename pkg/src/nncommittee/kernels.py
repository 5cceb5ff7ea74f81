"""Backend selection for the Gauss-Newton kernel.

The Cython extension is used when it was built; otherwise (or when
``NNCOMMITTEE_BACKEND=python``) the numpy reference is used. Both return
identical quantities up to floating-point summation order.
"""

import os

import numpy as np

from . import _pykernels

python_gauss_newton = _pykernels.gauss_newton

try:
    from ._ckernels import gauss_newton as compiled_gauss_newton
except ImportError:  # extension not built
    compiled_gauss_newton = None

if compiled_gauss_newton is not None and os.environ.get("NNCOMMITTEE_BACKEND", "") != "python":
    BACKEND = "cython"
    _impl = compiled_gauss_newton
else:
    BACKEND = "python"
    _impl = python_gauss_newton


def gauss_newton(model, X, T):
    """``(J^T J, J^T e, sum e^2)`` for ``model`` on inputs X (S, P), targets T (S, N)."""
    c = np.ascontiguousarray
    return _impl(c(model.w1), c(model.b1), c(model.w2), c(model.b2),
                 c(X, dtype=np.float64), c(T, dtype=np.float64))
