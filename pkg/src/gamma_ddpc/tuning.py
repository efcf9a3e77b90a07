"""Choosing beta2 / beta3 from variance-matching conditions, and the oracle grid sweep.

Matching residuals (both are functions of beta through the step optimum):

    beta2:  ||L33^{-1}(y_hat_0 - y_r)||^2 - T(||g1||^2 + ||g2(beta)||^2)/N
    beta3:  ||g3(beta)||^2               - T(||g1||^2 + ||g2(beta)||^2)/N

The root is located by a log-grid scan followed by bisection. The scan starts
from the unregularized end of the bracket (small beta2, large beta3), and the
first sign change found there is refined.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .controllers import BETA2, BETA3

if False:  # pragma: no cover - typing only
    from .controllers import StepProblem


@dataclass(frozen=True)
class TuneConfig:
    mode: str
    bracket: tuple = (1.0, 1e4)
    grid_points: int = 200
    tol_rel: float = 1e-3
    max_bisect: int = 60

    def __post_init__(self):
        lo, hi = self.bracket
        if not (0 < lo < hi):
            raise ValueError("bracket must satisfy 0 < beta_min < beta_max")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")
        if self.mode not in (BETA2, BETA3):
            raise ValueError(f"mode must be {BETA2!r} or {BETA3!r}")

    def grid(self) -> np.ndarray:
        return np.logspace(np.log10(self.bracket[0]), np.log10(self.bracket[1]), self.grid_points)


@dataclass
class TuneResult:
    beta: float
    residual: float
    rhs: float
    flagged: bool
    evaluations: int
    bisections: int = 0


def _l33_solve(step):
    if not hasattr(step, "_l33_solve"):
        L33 = step.L33
        d = np.abs(np.diag(L33))
        if d.size and d.min() > 1e-10 * d.max():
            step._l33_solve = lambda v: sla.solve_triangular(L33, v, lower=True, check_finite=False)
            step._l33_pinv = False
        else:
            P = np.linalg.pinv(L33, rcond=1e-10)
            step._l33_solve = lambda v: P @ v
            step._l33_pinv = True
    return step._l33_solve


def residual_path(mode: str, step, betas) -> tuple[np.ndarray, np.ndarray]:
    """(LHS - RHS, RHS) of the matching condition at each beta.

    Unconstrained steps use the closed-form beta paths; constrained ones
    solve one QP per beta, with failed solves reported as NaN.
    """
    betas = np.atleast_1d(np.asarray(betas, float))
    T, N = step.T, step.N
    g1sq = float(step.g1 @ step.g1)
    if not step.constrained:
        if mode == BETA2:
            G2 = step.ridge_path(betas)
            y0 = step.cy[:, None] + step.L32 @ G2
            lhs = np.sum(_l33_solve(step)(y0 - step.y_r[:, None]) ** 2, axis=0)
        else:
            G2, G3 = step.slack_path(betas)
            lhs = np.sum(G3 ** 2, axis=0)
        rhs = T * (g1sq + np.sum(G2 ** 2, axis=0)) / N
        return lhs - rhs, rhs
    from .errors import QpError

    res, rhs = np.full(betas.size, np.nan), np.full(betas.size, np.nan)
    for i, b in enumerate(betas):
        try:
            sol = step.solve(mode, b)
        except QpError:
            continue
        rhs[i] = T * (g1sq + float(sol.g2 @ sol.g2)) / N
        if mode == BETA2:
            lhs = float(np.sum(_l33_solve(step)(sol.y_hat_f - step.y_r) ** 2))
        else:
            lhs = float(sol.g3 @ sol.g3)
        res[i] = lhs - rhs[i]
    return res, rhs


def beta2_residual(beta2: float, step) -> float:
    """||L33^{-1}(y_hat_0 - y_r)||^2 - T(||g1*||^2 + ||g2*(beta2)||^2)/N."""
    return float(residual_path(BETA2, step, [beta2])[0][0])


def beta3_residual(beta3: float, step) -> float:
    """||g3*(beta3)||^2 - T(||g1*||^2 + ||g2*(beta3)||^2)/N."""
    return float(residual_path(BETA3, step, [beta3])[0][0])


def find_matching_beta(fn: Callable, bracket, grid_points: int = 200, tol_rel: float = 1e-3,
                       max_bisect: int = 60, from_high: bool = False, center: float | None = None) -> TuneResult:
    """Root of a scalar residual in beta on a log bracket.

    ``fn(betas) -> (residual, scale)`` is vectorized; convergence is
    ``|residual| <= tol_rel * scale``. Without a sign change the grid point of
    smallest ``|residual|`` is returned with ``flagged=True``.
    """
    lo, hi = bracket
    evals = 0

    def scan(a, b, npts):
        nonlocal evals
        g = np.logspace(np.log10(a), np.log10(b), npts)
        r, s = fn(g)
        evals += npts
        return g, np.asarray(r, float), np.asarray(s, float)

    def first_change(g, r):
        order = range(len(g) - 1, 0, -1) if from_high else range(len(g) - 1)
        for i in order:
            j = i - 1 if from_high else i + 1
            if np.isfinite(r[i]) and np.isfinite(r[j]) and (r[i] == 0 or np.sign(r[i]) != np.sign(r[j])):
                return i, j
        return None

    found = None
    if center is not None and lo < center < hi:
        a, b = max(lo, center / 10.0), min(hi, center * 10.0)
        g, r, s = scan(a, b, max(8, grid_points // 10))
        found = first_change(g, r)
    if found is None:
        g, r, s = scan(lo, hi, grid_points)
        if not np.any(np.isfinite(r)):
            raise RuntimeError("matching residual could not be evaluated anywhere on the bracket")
        found = first_change(g, r)
    if found is None:
        k = int(np.nanargmin(np.abs(r)))
        return TuneResult(float(g[k]), float(r[k]), float(s[k]), True, evals)

    i, j = found
    if r[i] == 0:
        return TuneResult(float(g[i]), 0.0, float(s[i]), False, evals)
    a, ra = np.log(g[i]), r[i]
    b = np.log(g[j])
    best = (float(g[i]), float(r[i]), float(s[i]))
    nb = 0
    for nb in range(1, max_bisect + 1):
        mid = 0.5 * (a + b)
        rm, sm = fn(np.array([np.exp(mid)]))
        evals += 1
        rm, sm = float(np.ravel(rm)[0]), float(np.ravel(sm)[0])
        best = (float(np.exp(mid)), rm, sm)
        if not np.isfinite(rm):
            break
        if abs(rm) <= tol_rel * abs(sm) or rm == 0:
            break
        if np.sign(rm) == np.sign(ra):
            a, ra = mid, rm
        else:
            b = mid
    return TuneResult(best[0], best[1], best[2], False, evals, nb)


def tune_beta(mode: str, step, cfg: TuneConfig, center: float | None = None) -> TuneResult:
    """Per-step beta from the matching condition for ``mode`` (beta2 or beta3).

    ``center`` (the previous step's beta) narrows the first scan on
    constrained steps, where every evaluation is a QP solve.
    """
    if mode != cfg.mode:
        raise ValueError(f"TuneConfig is for {cfg.mode}, asked for {mode}")
    center = center if step.constrained else None
    return find_matching_beta(
        lambda b: residual_path(mode, step, b),
        cfg.bracket, cfg.grid_points, cfg.tol_rel, cfg.max_bisect,
        from_high=(mode == BETA3), center=center,
    )


@dataclass
class SweepResult:
    mode: str
    betas: np.ndarray
    J_av: np.ndarray
    J_u_av: np.ndarray
    J_y_av: np.ndarray
    n_diverged: np.ndarray
    beta_bar: float
    cap: float

    def to_csv(self, path=None, comment: str | None = None) -> str:
        lines = [f"# {c}" for c in (comment or "").splitlines() if c]
        lines.append("beta,J_av,J_u_av,J_y_av,n_diverged")
        for row in zip(self.betas, self.J_av, self.J_u_av, self.J_y_av, self.n_diverged):
            lines.append(",".join(repr(float(v)) for v in row[:4]) + f",{int(row[4])}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            from pathlib import Path

            Path(path).write_text(text)
        return text


def oracle_sweep(grid, mode: str, n_mc: int, setup, workers: int = 1, cap: float | None = None) -> SweepResult:
    """Average closed-loop cost over ``n_mc`` replicas for each fixed beta in ``grid``.

    ``setup`` is an ``experiment.MonteCarloSetup``. Diverged or failed episodes
    count as ``cap``, by default ``cap_factor`` times the median Kalman-oracle
    cost on the same replicas. Ties in the minimum go to the smallest beta.
    """
    from .experiment import cap_value, capped, run_episodes

    grid = np.atleast_1d(np.asarray(grid, float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    if mode not in (BETA2, BETA3):
        raise ValueError(f"mode must be {BETA2!r} or {BETA3!r}")
    if cap is None:
        cap = cap_value(setup, n_mc, workers)
    J, Ju, Jy, nd = [], [], [], []
    for b in grid:
        rows = run_episodes(setup, f"{mode}-fixed", range(n_mc), beta=float(b), workers=workers)
        J.append(capped(rows, "J", cap).mean())
        Ju.append(capped(rows, "J_u", cap).mean())
        Jy.append(capped(rows, "J_y", cap).mean())
        nd.append(sum(r["diverged"] or r["failed"] for r in rows))
    J = np.array(J)
    k = int(np.flatnonzero(J == J.min())[0])
    return SweepResult(mode, grid, J, np.array(Ju), np.array(Jy), np.array(nd), float(grid[k]), cap)
