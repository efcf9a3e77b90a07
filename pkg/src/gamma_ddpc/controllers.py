"""gamma-DDPC step problems: unregularized, ridge on gamma2, slack through gamma3."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import QpError
from .hankel import LqFactors
from .qp import QpProblem, solve_qp, solve_unconstrained

UNREG, BETA2, BETA3 = "unreg", "beta2", "beta3"


@dataclass(frozen=True)
class ControlWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, float))
        R = np.atleast_2d(np.asarray(self.R, float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ValueError("Q and R must be square")
        if np.linalg.eigvalsh((Q + Q.T) / 2).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh((R + R.T) / 2).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @classmethod
    def scalar(cls, q: float, r: float, p: int = 1, m: int = 1) -> "ControlWeights":
        return cls(q * np.eye(p), r * np.eye(m))


@dataclass(frozen=True)
class BoxConstraints:
    u_lo: np.ndarray | None = None
    u_hi: np.ndarray | None = None
    y_lo: np.ndarray | None = None
    y_hi: np.ndarray | None = None

    def __post_init__(self):
        for lo, hi in ((self.u_lo, self.u_hi), (self.y_lo, self.y_hi)):
            if lo is not None and hi is not None and np.any(np.asarray(lo) > np.asarray(hi)):
                raise ValueError("box lower bound exceeds upper bound")

    @property
    def empty(self) -> bool:
        return all(v is None for v in (self.u_lo, self.u_hi, self.y_lo, self.y_hi))


def lifted_weights(w: ControlWeights, T: int, p: int, m: int):
    if w.Q.shape != (p, p) or w.R.shape != (m, m):
        raise ValueError("weight dimensions do not match the plant")
    return np.kron(np.eye(T), w.Q), np.kron(np.eye(T), w.R)


def box_rows(cons, Mu, cu, My, cy, T, m, p):
    """Inequality rows for lo <= c + M z <= hi on the lifted input and output."""
    d = Mu.shape[1]
    G, h = [np.zeros((0, d))], [np.zeros(0)]
    if cons is None or cons.empty:
        return G[0], h[0]
    for lo, hi, M, c, width in ((cons.u_lo, cons.u_hi, Mu, cu, m), (cons.y_lo, cons.y_hi, My, cy, p)):
        if hi is not None:
            b = np.tile(np.broadcast_to(np.asarray(hi, float), (width,)), T)
            keep = np.isfinite(b)
            G.append(M[keep]); h.append((b - c)[keep])
        if lo is not None:
            b = np.tile(np.broadcast_to(np.asarray(lo, float), (width,)), T)
            keep = np.isfinite(b)
            G.append(-M[keep]); h.append((c - b)[keep])
    return np.vstack(G), np.concatenate(h)


@dataclass
class StepSolution:
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    u_f: np.ndarray
    y_hat_f: np.ndarray
    beta_used: float
    objective: float
    status: str
    mode: str
    active_set: tuple = ()
    iterations: int = 0
    xi_f: np.ndarray = field(default=None, repr=False)


class StepProblem:
    """One receding-horizon step: factors, fixed g1, previewed reference, weights, boxes."""

    def __init__(self, factors: LqFactors, g1, y_r, weights: ControlWeights,
                 cons: BoxConstraints | None = None):
        f = factors
        self.f, self.cons = f, cons
        self.g1 = np.asarray(g1, float).ravel()
        self.y_r = np.asarray(y_r, float).ravel()
        T, m, p = f.T, f.m, f.p
        if self.y_r.size != p * T:
            raise ValueError(f"y_r has length {self.y_r.size}, expected {p * T}")
        self.T, self.m, self.p, self.N = T, m, p, f.N
        self.Qb, self.Rb = lifted_weights(weights, T, p, m)
        self.cu = f.L21 @ self.g1
        self.cy = f.L31 @ self.g1
        self.L22, self.L32, self.L33 = f.L22, f.L32, f.L33
        ey = self.cy - self.y_r
        QL32 = self.Qb @ self.L32
        self.H2 = self.L32.T @ QL32 + self.L22.T @ self.Rb @ self.L22
        self.f2 = QL32.T @ ey + self.L22.T @ (self.Rb @ self.cu)
        self.const = 0.5 * float(ey @ self.Qb @ ey) + 0.5 * float(self.cu @ self.Rb @ self.cu)
        self._slack = None

    @property
    def constrained(self) -> bool:
        return self.cons is not None and not self.cons.empty

    def _slack_terms(self):
        if self._slack is None:
            QL33 = self.Qb @ self.L33
            H23 = self.L32.T @ QL33
            H33 = self.L33.T @ QL33
            f3 = QL33.T @ (self.cy - self.y_r)
            self._slack = (H23, H33, f3)
        return self._slack

    def qp(self, mode: str, beta: float = 0.0) -> QpProblem:
        mT, pT = self.m * self.T, self.p * self.T
        if mode in (UNREG, BETA2):
            beta = 0.0 if mode == UNREG else beta
            H = self.H2 + 2.0 * beta * np.eye(mT)
            G, h = box_rows(self.cons, self.L22, self.cu, self.L32, self.cy, self.T, self.m, self.p)
            return QpProblem(H, self.f2, G, h)
        if mode == BETA3:
            H23, H33, f3 = self._slack_terms()
            H = np.block([[self.H2, H23], [H23.T, H33 + 2.0 * beta * np.eye(pT)]])
            Mu = np.hstack([self.L22, np.zeros((mT, pT))])
            My = np.hstack([self.L32, self.L33])
            G, h = box_rows(self.cons, Mu, self.cu, My, self.cy, self.T, self.m, self.p)
            return QpProblem(H, np.concatenate([self.f2, f3]), G, h)
        raise ValueError(f"unknown mode {mode!r}")

    def solve(self, mode: str, beta: float = 0.0, warm=None) -> StepSolution:
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        prob = self.qp(mode, beta)
        if prob.c == 0:
            z = solve_unconstrained(prob)
            status, active, iters = "optimal", (), 0
        else:
            res = solve_qp(prob, active_set=warm)
            if not res.ok:
                raise QpError(f"{mode} step QP {res.status}", res)
            z, status, active, iters = res.x, res.status, res.active_set, res.iterations
        mT = self.m * self.T
        g2 = z[:mT]
        g3 = z[mT:] if mode == BETA3 else np.zeros(self.p * self.T)
        u_f = self.cu + self.L22 @ g2
        xi = self.L33 @ g3
        y_hat = self.cy + self.L32 @ g2 + xi
        obj = prob.objective(z) + self.const
        return StepSolution(self.g1, g2, g3, u_f, y_hat, float(beta if mode != UNREG else 0.0),
                            obj, status, mode, active, iters, xi)

    # -- closed-form beta paths for unconstrained instances --------------------------

    def ridge_path(self, betas) -> np.ndarray:
        """gamma2*(beta2) for every beta2 in ``betas``; columns follow ``betas``."""
        if not hasattr(self, "_eig2"):
            self._eig2 = np.linalg.eigh(self.H2)
        lam, V = self._eig2
        betas = np.atleast_1d(np.asarray(betas, float))
        return -V @ ((V.T @ self.f2)[:, None] / (lam[:, None] + 2.0 * betas[None, :]))

    def slack_path(self, betas):
        """(gamma2*, gamma3*) for every beta3 in ``betas`` via the gamma3 Schur complement."""
        if not hasattr(self, "_eig3"):
            H23, H33, f3 = self._slack_terms()
            c = sla.cho_factor(self.H2, lower=True)
            X = sla.cho_solve(c, np.column_stack([H23, self.f2]))
            S = H33 - H23.T @ X[:, :-1]
            rhs = -(f3 - H23.T @ X[:, -1])
            lam, U = np.linalg.eigh((S + S.T) / 2)
            self._eig3 = (c, H23, lam, U, U.T @ rhs)
        c, H23, lam, U, Urhs = self._eig3
        betas = np.atleast_1d(np.asarray(betas, float))
        G3 = U @ (Urhs[:, None] / (np.clip(lam, 0, None)[:, None] + 2.0 * betas[None, :]))
        G2 = -sla.cho_solve(c, self.f2[:, None] + H23 @ G3)
        return G2, G3


def solve_unregularized(f: LqFactors, g1, y_r, w: ControlWeights, cons=None, warm=None) -> StepSolution:
    """gamma3 = 0 and no penalty on gamma2."""
    return StepProblem(f, g1, y_r, w, cons).solve(UNREG, 0.0, warm)


def solve_beta2(f: LqFactors, g1, y_r, w: ControlWeights, beta2: float, cons=None, warm=None) -> StepSolution:
    """Adds beta2 ||gamma2||^2 with gamma3 = 0; output boxes act on y_hat_0."""
    if beta2 < 0:
        raise ValueError("beta2 must be nonnegative")
    return StepProblem(f, g1, y_r, w, cons).solve(BETA2, beta2, warm)


def solve_beta3(f: LqFactors, g1, y_r, w: ControlWeights, beta3: float, cons=None, warm=None) -> StepSolution:
    """Joint (gamma2, gamma3) with slack L33 gamma3 and penalty beta3 ||gamma3||^2."""
    if beta3 < 0:
        raise ValueError("beta3 must be nonnegative")
    return StepProblem(f, g1, y_r, w, cons).solve(BETA3, beta3, warm)
