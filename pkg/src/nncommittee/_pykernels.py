"""Pure numpy reference for the compiled kernels.

Materialises the stacked (S*N, W) Jacobian and forms ``J^T J`` densely, so it is
also the independent check for the structured Cython accumulation.
"""

import numpy as np

from .mlp import MlpModel, MlpTopology, batch_jacobian


def gauss_newton(w1, b1, w2, b2, X, T):
    """Return ``(JtJ, Jte, sse)`` with ``e = T - O`` over all samples."""
    w1, w2 = np.asarray(w1, dtype=np.float64), np.asarray(w2, dtype=np.float64)
    topo = MlpTopology(w1.shape[1], w1.shape[0], w2.shape[0])
    m = MlpModel(topo, w1, b1, w2, b2)
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (X.shape[0], topo.output_dim):
        raise ValueError("targets must be (S, N)")
    out = np.tanh(X @ m.w1.T + m.b1) @ m.w2.T + m.b2
    e = (T - out).ravel()
    J = batch_jacobian(m, X).reshape(-1, topo.n_params)
    return J.T @ J, J.T @ e, float(e @ e)
