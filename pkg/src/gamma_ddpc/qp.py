"""Small dense strictly convex QPs: min 1/2 x'Hx + f'x  s.t.  Gx <= h.

The constrained solver is the Goldfarb-Idnani dual active-set method: it starts
from the unconstrained minimizer and adds the most violated constraint, dropping
blocking constraints on the way, so every iterate is dual feasible. A violated
constraint that cannot be added yields a Farkas certificate of infeasibility.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import QpError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.f = np.asarray(self.f, dtype=float).ravel()
        d = self.f.size
        if self.H.shape != (d, d):
            raise ValueError(f"H must be {d}x{d}, got {self.H.shape}")
        scale = max(1.0, np.abs(self.H).max(initial=0.0))
        if np.abs(self.H - self.H.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("H is not symmetric")
        self.H = (self.H + self.H.T) / 2
        if self.G is None:
            self.G = np.zeros((0, d))
            self.h = np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, d)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.h.size != self.G.shape[0]:
            raise ValueError("G and h have inconsistent row counts")

    @property
    def d(self) -> int:
        return self.f.size

    @property
    def c(self) -> int:
        return self.G.shape[0]

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.H)[0]) if self.d else np.inf

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QpResult:
    x: np.ndarray
    status: str
    active_set: tuple = ()
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    certificate: np.ndarray | None = None
    objective: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _cholesky(H):
    try:
        return sla.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise QpError("H is not positive definite") from None


def solve_unconstrained(p: QpProblem) -> np.ndarray:
    """x* = -H^{-1} f by Cholesky; raises QpError if H is not positive definite."""
    if p.d == 0:
        return np.zeros(0)
    return -sla.cho_solve(_cholesky(p.H), p.f, check_finite=False)


def kkt_residuals(p: QpProblem, x, lam) -> dict:
    """Infinity-norm KKT violations for Gx <= h with multipliers ``lam`` (length c)."""
    lam = np.zeros(p.c) if lam is None else np.asarray(lam, float)
    slack = p.G @ x - p.h
    return {
        "stationarity": float(np.abs(p.H @ x + p.f + p.G.T @ lam).max(initial=0.0)),
        "primal": float(np.clip(slack, 0, None).max(initial=0.0)),
        "dual": float(np.clip(-lam, 0, None).max(initial=0.0)),
        "complementarity": float(np.abs(lam * slack).max(initial=0.0)),
    }


def _eqp(H, f, Hinv, G, h, A):
    """Minimizer on {G_A x = h_A} and its multipliers."""
    if not A:
        return -Hinv @ f, np.zeros(0)
    N = G[A].T
    W = Hinv @ N
    lam = np.linalg.solve(N.T @ W, -(N.T @ (Hinv @ f)) - h[A])
    x = -Hinv @ (f + N @ lam)
    return x, lam


def _warm_start(H, f, Hinv, G, h, active):
    A = []
    for j in sorted(set(int(j) for j in active)):
        trial = A + [j]
        if np.linalg.matrix_rank(G[trial]) == len(trial):
            A = trial
    while True:
        x, lamA = _eqp(H, f, Hinv, G, h, A)
        if not A or lamA.min() >= 0:
            return x, A, lamA
        A.pop(int(np.argmin(lamA)))


def solve_qp(p: QpProblem, active_set=None, max_iter: int | None = None, tol: float = 1e-12) -> QpResult:
    """Solve the inequality-constrained QP; never raises on infeasibility.

    ``active_set`` warm-starts from a previous solution's working set.
    Returns status ``optimal``, ``infeasible`` (with ``certificate`` y >= 0,
    y'G = 0, y'h < 0) or ``max_iter``.
    """
    d, c = p.d, p.c
    H, f, G, h = p.H, p.f, p.G, p.h
    Hinv = sla.cho_solve(_cholesky(H), np.eye(d), check_finite=False) if d else np.zeros((0, 0))
    max_iter = 50 * max(d, 1) if max_iter is None else max_iter
    lam = np.zeros(c)
    if active_set:
        x, A, lamA = _warm_start(H, f, Hinv, G, h, active_set)
        lam[A] = lamA
    else:
        x, A = -Hinv @ f, []
    it = 0

    def result(status, cert=None):
        return QpResult(x.copy(), status, tuple(sorted(A)), lam.copy(), it, cert, p.objective(x))

    gnorm = np.linalg.norm(G, axis=1) if c else np.zeros(0)
    while True:
        viol = G @ x - h
        thresh = tol * (1.0 + np.abs(h) + gnorm * np.linalg.norm(x)) * 1e2
        viol[A] = -np.inf
        cand = viol > thresh
        if not np.any(cand):
            return result(OPTIMAL)
        k_add = int(np.argmax(np.where(cand, viol, -np.inf)))
        g = G[k_add]
        lam_p = 0.0
        while True:
            if it >= max_iter:
                return result(MAX_ITER)
            it += 1
            if A:
                N = G[A].T
                W = Hinv @ N
                r = np.linalg.lstsq(N.T @ W, W.T @ g, rcond=None)[0]
                z = -Hinv @ (g - N @ r)
            else:
                r = np.zeros(0)
                z = -Hinv @ g
            zn = -float(z @ g)
            gHg = float(g @ Hinv @ g)
            t2 = (g @ x - h[k_add]) / zn if zn > 1e-13 * gHg else np.inf
            t1, k_drop = np.inf, None
            for idx, (j, rj) in enumerate(zip(A, r)):
                if rj > 1e-12 * max(1.0, np.abs(r).max()):
                    ratio = lam[j] / rj
                    if ratio < t1 or (ratio == t1 and j < k_drop):
                        t1, k_drop = ratio, j
            if not np.isfinite(t1) and not np.isfinite(t2):
                cert = np.zeros(c)
                cert[k_add] = 1.0
                if A:
                    cert[A] = -r
                return result(INFEASIBLE, cert)
            t = min(t1, t2)
            if np.isfinite(t2):
                x = x + t * z
            if A:
                lam[A] = lam[A] - t * r
            lam_p += t
            if t2 <= t1:
                A.append(k_add)
                lam[k_add] = lam_p
                break
            A.remove(k_drop)
            lam[k_drop] = 0.0
