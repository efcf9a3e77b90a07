"""Multi-step predictor in gamma coordinates and its finite-sample variance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import SingularFactorError
from .hankel import LqFactors

SINGULAR_RTOL = 1e-10


@dataclass(frozen=True)
class GammaVector:
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray

    @property
    def g12(self) -> np.ndarray:
        return np.concatenate([self.g1, self.g2])

    @classmethod
    def zeros_like(cls, f: LqFactors) -> "GammaVector":
        a, b, c = f.sizes
        return cls(np.zeros(a), np.zeros(b), np.zeros(c))


def z_init_from_history(u_past, y_past) -> np.ndarray:
    """Stack z(t-rho), ..., z(t-1), oldest first, with z = [u; y]."""
    u = np.asarray(u_past, float).reshape(len(u_past), -1)
    y = np.asarray(y_past, float).reshape(len(y_past), -1)
    if len(u) != len(y):
        raise ValueError("u_past and y_past must have equal length")
    return np.hstack([u, y]).ravel()


def gamma1_star(L11: np.ndarray, z_init, rcond: float | None = None) -> np.ndarray:
    """Solve L11 g1 = z_init by forward substitution.

    A singular L11 (data not exciting enough) raises ``SingularFactorError``
    unless ``rcond`` is given, in which case a truncated pseudo-inverse is used;
    that path is meant for noise-free records where Z_P is rank deficient.
    """
    z = np.asarray(z_init, float).ravel()
    if z.size != L11.shape[0]:
        raise ValueError(f"z_init has length {z.size}, expected {L11.shape[0]}")
    d = np.abs(np.diag(L11))
    if rcond is not None:
        return np.linalg.lstsq(L11, z, rcond=rcond)[0]
    if d.size and d.min() <= SINGULAR_RTOL * d.max():
        raise SingularFactorError(
            f"L11 is singular (min/max diagonal {d.min():.3e}/{d.max():.3e}); "
            "pass rcond to use the pseudo-inverse"
        )
    return sla.solve_triangular(L11, z, lower=True, check_finite=False)


def predict(f: LqFactors, g: GammaVector) -> tuple[np.ndarray, np.ndarray]:
    """u_f = L21 g1 + L22 g2 and y_hat = L31 g1 + L32 g2 + L33 g3."""
    u_f = f.L21 @ g.g1 + f.L22 @ g.g2
    y_hat = f.L31 @ g.g1 + f.L32 @ g.g2 + f.L33 @ g.g3
    return u_f, y_hat


def variance_trace_bound(g: GammaVector, T: int, N: int, sigma2_hat: float) -> float:
    """Asymptotic trace of Var[e_tilde_f]: T sigma^2 ||g12||^2 / N."""
    if N <= 0:
        raise ValueError("N must be positive")
    return T * sigma2_hat * float(g.g12 @ g.g12) / N


def gamma3_norm_target(g1, g2, T: int, N: int) -> float:
    """Expected ||gamma3||^2 of the prediction-error coordinates: T(||g1||^2 + ||g2||^2)/N."""
    g1, g2 = np.asarray(g1, float), np.asarray(g2, float)
    return T * (float(g1 @ g1) + float(g2 @ g2)) / N


def q_columns(f: LqFactors) -> np.ndarray:
    """sqrt(N) [Q1; Q2]; column t is q(t)."""
    a, b, _ = f.sizes
    return np.sqrt(f.N) * f.Q[: a + b]


def sigma_q_from_samples(q: np.ndarray, k: int) -> np.ndarray:
    """(1/(N-|k|)) sum_t q(t+k) q(t)' for columns q(t) of ``q``."""
    N = q.shape[1]
    if abs(k) >= N:
        raise ValueError(f"lag {k} needs more than {N} samples")
    if k >= 0:
        return q[:, k:] @ q[:, : N - k].T / (N - k)
    return q[:, : N + k] @ q[:, -k:].T / (N + k)


def estimate_sigma_q(f: LqFactors, k: int) -> np.ndarray:
    if abs(k) > f.T:
        raise ValueError(f"|k|={abs(k)} exceeds horizon T={f.T}")
    return sigma_q_from_samples(q_columns(f), k)


def shift_matrix(k: int, T: int, p: int = 1) -> np.ndarray:
    """J_k: ones where (column - row) == k, lifted to p x p blocks."""
    return np.kron(np.eye(T, k=k), np.eye(p))


def lag_weights(q: np.ndarray, g12, T: int) -> np.ndarray:
    """(N-|k|)/N g12' Sigma_q(k)' g12 for k = -T..T, from the columns of ``q``.

    Uses s(t) = q(t)' g12, so each weight is sum_t s(t) s(t+|k|) / N.
    """
    s = np.asarray(g12, float).ravel() @ q
    N = s.size
    return np.array([s[abs(k):] @ s[: N - abs(k)] / N for k in range(-T, T + 1)])


def variance_from_lag_weights(w, sigma2, T: int) -> np.ndarray:
    """sum_k w_k J_k kron sigma2, with ``w`` indexed k = -T..T."""
    S = np.atleast_2d(np.asarray(sigma2, float))
    out = np.zeros((S.shape[0] * T, S.shape[0] * T))
    for k, wk in zip(range(-T, T + 1), w):
        out += wk * np.kron(np.eye(T, k=k), S)
    return out


def predicted_error_covariance(g12, sigma2, sigma_q: dict, T: int, N: int) -> np.ndarray:
    """Asymptotic Var[sqrt(N) e_tilde_f] = sum_k sigma^2 J_k (N-|k|)/N g12' Sigma_q(k)' g12.

    ``sigma_q`` maps every lag k in [-T, T] to its covariance estimate; for
    p > 1 ``sigma2`` is the p x p innovation covariance.
    """
    g12 = np.asarray(g12, float).ravel()
    missing = [k for k in range(-T, T + 1) if k not in sigma_q]
    if missing:
        raise ValueError(f"sigma_q is missing lags {missing}")
    w = [(N - abs(k)) / N * float(g12 @ sigma_q[k].T @ g12) for k in range(-T, T + 1)]
    return variance_from_lag_weights(w, sigma2, T)


def estimate_sigma(L33: np.ndarray, p: int = 1) -> float:
    """sigma^2 estimate: trace of the leading p x p block of L33 L33' over p."""
    blk = L33[:p, :] @ L33[:p, :].T
    return float(np.trace(blk)) / p
