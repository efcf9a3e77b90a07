# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: state-space recursion and block-Hankel fill."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def simulate(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] C,
             const double[:, ::1] D, const double[:, ::1] K,
             const double[:, ::1] u, const double[:, ::1] e, const double[::1] x0):
    """Run x+ = Ax + Bu + Ke, y = Cx + Du + e. Returns (y, x) with x of length L+1."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[1], p = C.shape[0]
    cdef Py_ssize_t L = u.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double acc
    y_arr = np.empty((L, p), dtype=np.float64)
    x_arr = np.empty((L + 1, n), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] x = x_arr
    for i in range(n):
        x[0, i] = x0[i]
    for t in range(L):
        for i in range(p):
            acc = e[t, i]
            for j in range(n):
                acc += C[i, j] * x[t, j]
            for j in range(m):
                acc += D[i, j] * u[t, j]
            y[t, i] = acc
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += A[i, j] * x[t, j]
            for j in range(m):
                acc += B[i, j] * u[t, j]
            for j in range(p):
                acc += K[i, j] * e[t, j]
            x[t + 1, i] = acc
    return y_arr, x_arr


def kalman_filter(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] C,
                  const double[:, ::1] D, const double[:, ::1] K,
                  const double[:, ::1] u, const double[:, ::1] y, const double[::1] x0):
    """One-step predictor states xhat(0..L) driven by measured (u, y)."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[1], p = C.shape[0]
    cdef Py_ssize_t L = u.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double acc
    x_arr = np.empty((L + 1, n), dtype=np.float64)
    res_arr = np.empty(p, dtype=np.float64)
    cdef double[:, ::1] x = x_arr
    cdef double[::1] res = res_arr
    for i in range(n):
        x[0, i] = x0[i]
    for t in range(L):
        for i in range(p):
            acc = y[t, i]
            for j in range(n):
                acc -= C[i, j] * x[t, j]
            for j in range(m):
                acc -= D[i, j] * u[t, j]
            res[i] = acc
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += A[i, j] * x[t, j]
            for j in range(m):
                acc += B[i, j] * u[t, j]
            for j in range(p):
                acc += K[i, j] * res[j]
            x[t + 1, i] = acc
    return x_arr


def hankel(const double[:, ::1] w, Py_ssize_t t0, Py_ssize_t t1, Py_ssize_t N):
    cdef Py_ssize_t s = w.shape[1]
    cdef Py_ssize_t L = t1 - t0 + 1
    cdef Py_ssize_t i, j, k
    cdef double scale = 1.0 / sqrt(<double> N)
    out_arr = np.empty((s * L, N), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(L):
        for k in range(s):
            for j in range(N):
                out[i * s + k, j] = w[t0 + i + j, k] * scale
    return out_arr
