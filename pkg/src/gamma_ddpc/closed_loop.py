"""Receding-horizon simulation of the gamma-DDPC variants and the Kalman/MPC oracle."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .controllers import BETA2, BETA3, UNREG, BoxConstraints, ControlWeights, StepProblem
from .errors import QpError, SingularFactorError
from .hankel import LqFactors
from .lti import SystemModel, psd_sqrt
from .oracle_mpc import KalmanState, ModelPredictor, kalman_step, solve_mpc
from .predictor import gamma1_star, z_init_from_history
from .tuning import TuneConfig, tune_beta

MODES = ("unreg", "beta2-fixed", "beta3-fixed", "beta2-online", "beta3-online", "kalman-oracle")


def reference_signal(T: int, T_v: int, p: int = 1) -> np.ndarray:
    """y_r(t) = sin(5 pi t / (T + T_v - 1)) for t = 0..T+T_v-1, shape (T+T_v, p)."""
    if T < 1 or T_v < 1:
        raise ValueError("T and T_v must be >= 1")
    t = np.arange(T + T_v)
    r = np.sin(5 * np.pi * t / (T + T_v - 1))
    return np.repeat(r[:, None], p, axis=1)


def preview(y_r: np.ndarray, t: int, T: int) -> np.ndarray:
    """Samples t..t+T-1 flattened oldest first, holding the last value past the end."""
    idx = np.minimum(np.arange(t, t + T), len(y_r) - 1)
    return y_r[idx].ravel()


@dataclass
class ClosedLoopConfig:
    T: int = 20
    rho: int = 20
    T_v: int = 50
    weights: ControlWeights = field(default_factory=lambda: ControlWeights.scalar(2000.0, 0.01))
    cons: BoxConstraints | None = None
    noise_mode: str = "additive-output"
    noise_variance: float | np.ndarray = 0.0
    blowup_factor: float = 1e4
    tune2: TuneConfig = field(default_factory=lambda: TuneConfig(BETA2, (1.0, 1e4)))
    tune3: TuneConfig = field(default_factory=lambda: TuneConfig(BETA3, (1e-4, 1.0)))
    cost_output: str = "measured"
    gamma1_rcond: float | None = None
    reference: np.ndarray | None = None
    warm_bracket: bool = True


@dataclass
class Episode:
    mode: str
    u: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    y_r: np.ndarray
    betas: np.ndarray
    objectives: np.ndarray
    statuses: list
    u_plans: list = field(default_factory=list, repr=False)
    diverged: bool = False
    failed: str | None = None
    tune_flags: list = field(default_factory=list)
    cost_output: str = "measured"

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    def records(self):
        for t in range(self.steps):
            yield {
                "t": t,
                "u": self.u[t].tolist(),
                "y": self.y[t].tolist(),
                "y_r": self.y_r[t].tolist(),
                "beta": None if not np.isfinite(self.betas[t]) else float(self.betas[t]),
                "objective": float(self.objectives[t]),
            }

    def to_jsonl(self, fh, **extra):
        for rec in self.records():
            rec.update(extra)
            fh.write(json.dumps(rec) + "\n")


def _noise(plant: SystemModel, cfg: ClosedLoopConfig, rng) -> np.ndarray:
    w = rng.standard_normal((cfg.T_v, plant.p))
    if cfg.noise_mode == "innovation":
        return w @ psd_sqrt(plant.sigma2).T
    var = np.broadcast_to(np.asarray(cfg.noise_variance, float), (plant.p,))
    return w * np.sqrt(var)


def run_closed_loop(mode: str, plant: SystemModel, factors: LqFactors | None, cfg: ClosedLoopConfig,
                    seed, beta: float | None = None) -> Episode:
    """Simulate ``cfg.T_v`` feedback steps; solver failures end the episode with a flag."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    if mode.endswith("-fixed") and beta is None:
        raise ValueError(f"mode {mode} needs a beta")
    if mode != "kalman-oracle" and factors is None:
        raise ValueError(f"mode {mode} needs LQ factors")
    m, p, n, T = plant.m, plant.p, plant.n, cfg.T
    rng = np.random.default_rng(seed)
    noise = _noise(plant, cfg, rng)
    y_ref = cfg.reference if cfg.reference is not None else reference_signal(T, cfg.T_v, p)
    bound = cfg.blowup_factor * max(float(np.abs(y_ref).max()), 1.0)

    rho = factors.rho if factors is not None else cfg.rho
    hist_u, hist_y = np.zeros((rho, m)), np.zeros((rho, p))
    x = np.zeros(n)
    ks = KalmanState(np.zeros(n))
    mpc_pred = ModelPredictor(plant, T) if mode == "kalman-oracle" else None

    us, ys, ycs, betas, objs, stats, plans, flags = [], [], [], [], [], [], [], []
    warm, prev_beta = None, None
    diverged, failed = False, None
    for t in range(cfg.T_v):
        r_t = preview(y_ref, t, T)
        b_used = np.nan
        try:
            if mode == "kalman-oracle":
                sol = solve_mpc(plant, ks.x_hat, r_t, cfg.weights, cfg.cons, T, mpc_pred, warm)
                u_f, obj, warm, status = sol.u_f, sol.objective, sol.active_set, sol.status
            else:
                g1 = gamma1_star(factors.L11, z_init_from_history(hist_u, hist_y), cfg.gamma1_rcond)
                step = StepProblem(factors, g1, r_t, cfg.weights, cfg.cons)
                if mode == "unreg":
                    s_mode, b_used = UNREG, 0.0
                elif mode.endswith("-fixed"):
                    s_mode, b_used = (BETA2 if mode.startswith("beta2") else BETA3), float(beta)
                else:
                    s_mode = BETA2 if mode.startswith("beta2") else BETA3
                    tcfg = cfg.tune2 if s_mode == BETA2 else cfg.tune3
                    center = prev_beta if cfg.warm_bracket else None
                    tr = tune_beta(s_mode, step, tcfg, center=center)
                    b_used, prev_beta = tr.beta, tr.beta
                    if tr.flagged:
                        flags.append(t)
                sol = step.solve(s_mode, b_used, warm)
                u_f, obj, warm, status = sol.u_f, sol.objective, sol.active_set or None, sol.status
        except (QpError, SingularFactorError, np.linalg.LinAlgError, RuntimeError) as exc:
            failed = f"t={t}: {exc}"
            break
        u_t = u_f[:m].copy()
        y_clean = plant.C @ x + plant.D @ u_t
        y_t = y_clean + noise[t]
        if cfg.noise_mode == "innovation":
            x = plant.A @ x + plant.B @ u_t + plant.K @ noise[t]
        else:
            x = plant.A @ x + plant.B @ u_t
        ks = kalman_step(plant, ks, u_t, y_t)
        us.append(u_t); ys.append(y_t); ycs.append(y_clean)
        betas.append(b_used); objs.append(obj); stats.append(status); plans.append(u_f)
        hist_u = np.vstack([hist_u[1:], u_t]) if rho else hist_u
        hist_y = np.vstack([hist_y[1:], y_t]) if rho else hist_y
        if not np.all(np.isfinite(y_t)) or np.abs(y_t).max() > bound:
            diverged = True
            break

    k = len(us)
    return Episode(
        mode=mode,
        u=np.array(us).reshape(k, m),
        y=np.array(ys).reshape(k, p),
        y_clean=np.array(ycs).reshape(k, p),
        y_r=y_ref[:k].reshape(k, p),
        betas=np.array(betas, float),
        objectives=np.array(objs, float),
        statuses=stats,
        u_plans=plans,
        diverged=diverged,
        failed=failed,
        tune_flags=flags,
        cost_output=cfg.cost_output,
    )


def performance_indices(ep: Episode, weights: ControlWeights, y_r=None) -> dict:
    """J (weighted), J_u (input energy) and J_y (relative tracking error) over completed steps.

    J_y reports ``inf`` when the reference energy is zero.
    """
    y = ep.y_clean if ep.cost_output == "noise_free" else ep.y
    yr = ep.y_r if y_r is None else np.asarray(y_r, float).reshape(y.shape)
    k = y.shape[0]
    if k == 0:
        return {"J": np.inf, "J_u": np.inf, "J_y": np.inf}
    err = y - yr
    J = (np.einsum("ti,ij,tj->", err, weights.Q, err) + np.einsum("ti,ij,tj->", ep.u, weights.R, ep.u)) / k
    J_u = float(np.sum(ep.u ** 2)) / k
    den = float(np.sum(yr ** 2))
    J_y = float(np.sum(err ** 2)) / den if den > 0 else np.inf
    return {"J": float(J), "J_u": J_u, "J_y": J_y}
