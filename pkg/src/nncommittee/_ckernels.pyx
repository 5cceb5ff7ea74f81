# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gauss-Newton accumulation for the two-layer tanh/linear MLP.

Builds ``J^T J``, ``J^T e`` and the squared error without materialising the
stacked (S*N, W) Jacobian. Row (s, j) of that Jacobian has three pieces:

    dO_j/dW1[h, q] = W2[j, h] * d_sh * xt_sq     (xt = [x, 1], d = 1 - a^2)
    dO_j/dW2[j, h] = at_sh                       (at = [a, 1])

so every block of ``J^T J`` factors into small per-sample Gram products:

    hidden x hidden = (W2^T W2)[h, h'] * sum_s u_s u_s^T,   u_s[h, q] = d_sh xt_sq
    hidden x out_j  = W2[j, h] * sum_s u_s at_s^T
    out_j  x out_j  = sum_s at_s at_s^T                     (zero across j != j')
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()


cdef inline Py_ssize_t hidden_index(Py_ssize_t h, Py_ssize_t q, Py_ssize_t P,
                                    Py_ssize_t H) noexcept nogil:
    # column of W1[h, q] (q < P) or b1[h] (q == P)
    if q < P:
        return h * P + q
    return H * P + h


def gauss_newton(const double[:, ::1] w1, const double[::1] b1,
                 const double[:, ::1] w2, const double[::1] b2,
                 const double[:, ::1] X, const double[:, ::1] T):
    """Return ``(JtJ, Jte, sse)`` with ``e = T - O`` over all samples."""
    cdef Py_ssize_t S = X.shape[0], P = X.shape[1]
    cdef Py_ssize_t H = w1.shape[0], N = w2.shape[0]
    cdef Py_ssize_t K1 = H * (P + 1), H1 = H + 1
    cdef Py_ssize_t W = H * P + H + N * H + N
    cdef Py_ssize_t o2 = H * P + H, o3 = H * P + H + N * H
    if w1.shape[1] != P or b1.shape[0] != H or w2.shape[1] != H or b2.shape[0] != N:
        raise ValueError("inconsistent parameter shapes")
    if T.shape[0] != S or T.shape[1] != N:
        raise ValueError("targets must be (S, N)")

    jtj_arr = np.zeros((W, W))
    jte_arr = np.zeros(W)
    u_arr = np.empty((S, K1))
    at_arr = np.empty((S, H1))
    m_arr = np.zeros((K1, K1))
    c_arr = np.zeros((K1, H1))
    q_arr = np.zeros((H1, H1))
    g_arr = np.zeros((H, H))
    r_arr = np.empty(H)
    e_arr = np.empty(N)
    cdef double[:, ::1] JtJ = jtj_arr
    cdef double[::1] Jte = jte_arr
    cdef double[:, ::1] U = u_arr
    cdef double[:, ::1] At = at_arr
    cdef double[:, ::1] M = m_arr
    cdef double[:, ::1] C = c_arr
    cdef double[:, ::1] Q = q_arr
    cdef double[:, ::1] G = g_arr
    cdef double[::1] r = r_arr
    cdef double[::1] e = e_arr

    cdef Py_ssize_t s, h, hh, p, q, qq, j, k, l, col, row
    cdef double z, a, d, o, xq, sse = 0.0, us, g

    with nogil:
        # forward pass, residuals, J^T e and the per-sample factor vectors
        for s in range(S):
            for h in range(H):
                z = b1[h]
                for p in range(P):
                    z = z + w1[h, p] * X[s, p]
                a = tanh(z)
                At[s, h] = a
            At[s, H] = 1.0
            for j in range(N):
                o = b2[j]
                for h in range(H):
                    o = o + w2[j, h] * At[s, h]
                e[j] = T[s, j] - o
                sse = sse + e[j] * e[j]
            for h in range(H):
                r[h] = 0.0
            for j in range(N):
                for h in range(H):
                    r[h] = r[h] + e[j] * w2[j, h]
                    Jte[o2 + j * H + h] += e[j] * At[s, h]
                Jte[o3 + j] += e[j]
            for h in range(H):
                d = 1.0 - At[s, h] * At[s, h]
                for q in range(P + 1):
                    xq = X[s, q] if q < P else 1.0
                    U[s, h * (P + 1) + q] = d * xq
                    Jte[hidden_index(h, q, P, H)] += r[h] * d * xq

        # Gram products (upper triangle of M and Q, full C)
        for s in range(S):
            for k in range(K1):
                us = U[s, k]
                if us == 0.0:
                    continue
                for l in range(k, K1):
                    M[k, l] += us * U[s, l]
                for l in range(H1):
                    C[k, l] += us * At[s, l]
            for k in range(H1):
                for l in range(k, H1):
                    Q[k, l] += At[s, k] * At[s, l]

        for h in range(H):
            for hh in range(H):
                g = 0.0
                for j in range(N):
                    g = g + w2[j, h] * w2[j, hh]
                G[h, hh] = g

        # hidden x hidden block
        for k in range(K1):
            h = k // (P + 1)
            q = k - h * (P + 1)
            row = hidden_index(h, q, P, H)
            for l in range(k, K1):
                hh = l // (P + 1)
                qq = l - hh * (P + 1)
                col = hidden_index(hh, qq, P, H)
                g = G[h, hh] * M[k, l]
                JtJ[row, col] = g
                JtJ[col, row] = g

        # hidden x output blocks
        for k in range(K1):
            h = k // (P + 1)
            q = k - h * (P + 1)
            row = hidden_index(h, q, P, H)
            for j in range(N):
                for l in range(H1):
                    col = o2 + j * H + l if l < H else o3 + j
                    g = w2[j, h] * C[k, l]
                    JtJ[row, col] = g
                    JtJ[col, row] = g

        # output x output blocks, identical for every output unit
        for j in range(N):
            for k in range(H1):
                row = o2 + j * H + k if k < H else o3 + j
                for l in range(k, H1):
                    col = o2 + j * H + l if l < H else o3 + j
                    JtJ[row, col] = Q[k, l]
                    JtJ[col, row] = Q[k, l]

    return jtj_arr, jte_arr, sse
