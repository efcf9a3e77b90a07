"""Pure-numpy versions of the compiled kernels, same signatures and outputs."""
import numpy as np


def simulate(A, B, C, D, K, u, e, x0):
    L = u.shape[0]
    x = np.empty((L + 1, A.shape[0]))
    y = np.empty((L, C.shape[0]))
    x[0] = x0
    for t in range(L):
        y[t] = C @ x[t] + D @ u[t] + e[t]
        x[t + 1] = A @ x[t] + B @ u[t] + K @ e[t]
    return y, x


def kalman_filter(A, B, C, D, K, u, y, x0):
    L = u.shape[0]
    x = np.empty((L + 1, A.shape[0]))
    x[0] = x0
    for t in range(L):
        res = y[t] - C @ x[t] - D @ u[t]
        x[t + 1] = A @ x[t] + B @ u[t] + K @ res
    return x


def hankel(w, t0, t1, N):
    rows = [w[t0 + i : t0 + i + N].T for i in range(t1 - t0 + 1)]
    return np.vstack(rows) / np.sqrt(N)
