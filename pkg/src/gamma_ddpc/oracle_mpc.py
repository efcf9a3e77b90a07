"""Model-based benchmark: Kalman predictor plus condensed MPC on the true plant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lti import SystemModel


def observability_matrix(sys: SystemModel, T: int) -> np.ndarray:
    """Gamma = [C; CA; ...; CA^{T-1}], shape (pT, n)."""
    blocks, CA = [], sys.C
    for _ in range(T):
        blocks.append(CA)
        CA = CA @ sys.A
    return np.vstack(blocks)


def _block_toeplitz(markov: list[np.ndarray], T: int) -> np.ndarray:
    p, q = markov[0].shape
    out = np.zeros((p * T, q * T))
    for i in range(T):
        for j in range(i + 1):
            out[i * p:(i + 1) * p, j * q:(j + 1) * q] = markov[i - j]
    return out


def toeplitz_hd(sys: SystemModel, T: int) -> np.ndarray:
    """Lower block-Toeplitz input-to-output map with D on the diagonal, (pT, mT)."""
    return _block_toeplitz(sys.markov_parameters(T), T)


def toeplitz_hs(sys: SystemModel, T: int) -> np.ndarray:
    """Lower block-Toeplitz innovation-to-output map with I on the diagonal, (pT, pT)."""
    return _block_toeplitz(sys.markov_parameters(T, noise=True), T)


def kalman_gain_from_covariances(A, C, W, V, S=None):
    """Steady-state predictor gain and innovation covariance from process/measurement noise.

    Model x+ = Ax + Bu + w, y = Cx + Du + v with Cov(w)=W, Cov(v)=V, Cov(w,v)=S.
    """
    n, p = A.shape[0], C.shape[0]
    S = np.zeros((n, p)) if S is None else S
    P = sla.solve_discrete_are(A.T, C.T, W, V, s=S)
    Re = C @ P @ C.T + V
    K = (A @ P @ C.T + S) @ np.linalg.inv(Re)
    return K, Re


@dataclass
class KalmanState:
    x_hat: np.ndarray


def kalman_step(sys: SystemModel, ks: KalmanState, u, y) -> KalmanState:
    """x+ = A x + B u + K (y - C x - D u)."""
    x = ks.x_hat
    u = np.atleast_1d(np.asarray(u, float))
    y = np.atleast_1d(np.asarray(y, float))
    innov = y - sys.C @ x - sys.D @ u
    return KalmanState(sys.A @ x + sys.B @ u + sys.K @ innov)


@dataclass
class MpcSolution:
    u_f: np.ndarray
    y_hat: np.ndarray
    objective: float
    status: str
    active_set: tuple = ()


class ModelPredictor:
    """Condensed prediction y_hat = Gamma x + H_d u_f over horizon T, cached per plant."""

    def __init__(self, sys: SystemModel, T: int):
        self.sys, self.T = sys, T
        self.Gamma = observability_matrix(sys, T)
        self.Hd = toeplitz_hd(sys, T)


def solve_mpc(sys: SystemModel, x_init, y_r, weights, cons=None, T: int | None = None,
              predictor: ModelPredictor | None = None, warm=None) -> MpcSolution:
    """Oracle MPC step: min 1/2 sum ||y_hat - y_r||_Q^2 + ||u||_R^2 with noise-free predictions.

    Raises ``QpError`` when the box constraints are infeasible.
    """
    from .controllers import lifted_weights, box_rows
    from .errors import QpError
    from .qp import QpProblem, solve_qp, solve_unconstrained

    y_r = np.asarray(y_r, float).ravel()
    T = T or y_r.size // sys.p
    pred = predictor if predictor is not None and predictor.T == T else ModelPredictor(sys, T)
    Qb, Rb = lifted_weights(weights, T, sys.p, sys.m)
    free = pred.Gamma @ np.asarray(x_init, float).ravel() if sys.n else np.zeros(sys.p * T)
    Hd = pred.Hd
    H = Hd.T @ Qb @ Hd + Rb
    f = Hd.T @ Qb @ (free - y_r)
    const = 0.5 * float((free - y_r) @ Qb @ (free - y_r))
    G, h = box_rows(cons, np.eye(sys.m * T), np.zeros(sys.m * T), Hd, free, T, sys.m, sys.p)
    prob = QpProblem(H, f, G, h)
    if prob.c == 0:
        u_f = solve_unconstrained(prob)
        status, active = "optimal", ()
    else:
        res = solve_qp(prob, active_set=warm)
        if not res.ok:
            raise QpError(f"oracle MPC QP {res.status}", res)
        u_f, status, active = res.x, res.status, res.active_set
    return MpcSolution(u_f, free + Hd @ u_f, prob.objective(u_f) + const, status, active)
