"""Monte-Carlo checks of the prediction-error statistics behind the tuning rules.

All checks drive the plant in innovation form with a fixed input record and
redraw only the innovations, so the expectations are over e for fixed u.
"""
from __future__ import annotations

import json
import time

import numpy as np

from .controllers import ControlWeights, StepProblem
from .hankel import build_bundle, hankel, lq_decompose
from .lti import DataSet, SystemModel, psd_sqrt, simulate
from .oracle_mpc import toeplitz_hs
from .predictor import (estimate_sigma, gamma1_star, lag_weights, q_columns,
                        variance_from_lag_weights)

_BURN = 500


def _seed(master, stream, i=0):
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=(4, stream, int(i))))


def _record(sys: SystemModel, u: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate ``u`` (burn-in included) with fresh innovations; returns (u, y, e) after burn-in."""
    e = rng.standard_normal((len(u), sys.p)) @ psd_sqrt(sys.sigma2).T
    y, _ = simulate(sys, u, e)
    return u[_BURN:], y[_BURN:], e[_BURN:]


def _input(sys, N_data, rng):
    return rng.standard_normal((N_data + _BURN, sys.m))


def calibration_gamma12(sys: SystemModel, N: int, rho: int, T: int, seed: int = 0,
                        weights: ControlWeights | None = None) -> np.ndarray:
    """gamma_12 of an unregularized tracking step on an independent record.

    The record, the past window and the sinusoidal reference window are all
    drawn from ``seed``, so the vector is fixed before any redraw is made.
    """
    rng = _seed(seed, 0)
    N_data = N + rho + T - 1
    u, y, _ = _record(sys, _input(sys, N_data, rng), rng)
    f = lq_decompose(build_bundle(DataSet(u, y), rho, T))
    t0 = int(rng.integers(0, N))
    z = np.hstack([u, y])[t0: t0 + rho].ravel()
    g1 = gamma1_star(f.L11, z)
    y_r = np.repeat(np.sin(5 * np.pi * (t0 + np.arange(T)) / (N - 1))[:, None], sys.p, axis=1).ravel()
    w = weights or ControlWeights.scalar(2000.0, 0.01, sys.p, sys.m)
    sol = StepProblem(f, g1, y_r, w).solve("unreg")
    return np.concatenate([sol.g1, sol.g2])


def variance_check(sys: SystemModel, N: int = 10_000, rho: int = 20, T: int = 20, redraws: int = 500,
                seed: int = 0, g12=None) -> dict:
    """Sample covariance of sqrt(N) e_tilde_f over innovation redraws vs the asymptotic formula.

    Returns relative Frobenius error against the lag-weighted formula (lag
    weights averaged over redraws), and the trace ratio against T sigma^2 ||g12||^2.
    """
    t_start = time.time()
    if g12 is None:
        g12 = calibration_gamma12(sys, N, rho, T, seed)
    g12 = np.asarray(g12, float)
    rng = _seed(seed, 1)
    N_data = N + rho + T - 1
    u = _input(sys, N_data, rng)
    X, W = [], 0.0
    for _ in range(redraws):
        ur, y, e = _record(sys, u, rng)
        f = lq_decompose(build_bundle(DataSet(ur, y), rho, T))
        a, b, _ = f.sizes
        Q12 = f.Q[: a + b]
        Ef = hankel(e, rho, rho + T - 1, N)
        X.append(np.sqrt(N) * Ef @ (Q12.T @ g12))
        W = W + lag_weights(q_columns(f), g12, T)
    X = np.array(X)
    S = np.cov(X, rowvar=False)
    V = variance_from_lag_weights(W / redraws, sys.sigma2, T)
    trace_target = T * float(np.trace(sys.sigma2)) / sys.p * float(g12 @ g12)
    frob = float(np.linalg.norm(S - V) / np.linalg.norm(V))
    mean_z = np.abs(X.mean(axis=0)) / (X.std(axis=0, ddof=1) / np.sqrt(redraws))
    # sampling floor of a Wishart estimate with this many redraws
    floor = float(np.sqrt((np.trace(V) ** 2 / np.linalg.norm(V) ** 2 + 1) / redraws))
    return {
        "check": "variance", "N": N, "rho": rho, "T": T, "redraws": redraws, "seed": seed,
        "frob_rel": frob, "frob_sampling_floor": floor,
        "trace_sample": float(np.trace(S)), "trace_formula": float(np.trace(V)), "trace_target": trace_target,
        "trace_ratio": float(np.trace(S)) / trace_target,
        "mean_zscore_max": float(mean_z.max()), "g12_norm2": float(g12 @ g12), "seconds": time.time() - t_start,
    }


def l33_limit_check(sys: SystemModel, Ns=(2_000, 10_000, 50_000), seeds: int = 20, rho: int = 20, T: int = 20,
                seed: int = 0) -> dict:
    """Relative Frobenius distance between L33 L33' and sigma^2 H_s H_s' for each N, median over seeds."""
    t_start = time.time()
    Hs = toeplitz_hs(sys, T)
    target = Hs @ np.kron(np.eye(T), sys.sigma2) @ Hs.T
    errs = {}
    for N in Ns:
        vals = []
        for s in range(seeds):
            rng = _seed(seed, 2, s)
            N_data = N + rho + T - 1
            u, y, _ = _record(sys, _input(sys, N_data, rng), rng)
            f = lq_decompose(build_bundle(DataSet(u, y), rho, T))
            vals.append(float(np.linalg.norm(f.L33 @ f.L33.T - target) / np.linalg.norm(target)))
        errs[int(N)] = vals
    med = [float(np.median(errs[int(N)])) for N in Ns]
    return {
        "check": "l33_limit", "rho": rho, "T": T, "seeds": seeds, "Ns": [int(N) for N in Ns],
        "median_rel_err": med, "decreasing": bool(all(a > b for a, b in zip(med, med[1:]))),
        "truncation": float(np.max(np.abs(np.linalg.eigvals(sys.A - sys.K @ sys.C)), initial=0.0) ** rho),
        "seconds": time.time() - t_start,
    }


def norm_rule_check(sys: SystemModel, N: int = 10_000, rho: int = 20, T: int = 20, redraws: int = 100,
                seed: int = 0, g12=None) -> dict:
    """Prediction error -H_s e_tilde_f against its L33 surrogate and the norm rule for gamma3.

    Reports the mean of ||L33^{-1} y_tilde||^2 over T||g12||^2/N, and the relative
    error between y_tilde and -L33 e_tilde_f / sigma.
    """
    t_start = time.time()
    if g12 is None:
        g12 = calibration_gamma12(sys, N, rho, T, seed)
    g12 = np.asarray(g12, float)
    Hs = toeplitz_hs(sys, T)
    sigma = np.sqrt(float(np.trace(sys.sigma2)) / sys.p)
    rng = _seed(seed, 3)
    u = _input(sys, N + rho + T - 1, rng)
    norms, rel, sig = [], [], []
    for _ in range(redraws):
        ur, y, e = _record(sys, u, rng)
        f = lq_decompose(build_bundle(DataSet(ur, y), rho, T))
        a, b, _ = f.sizes
        e_t = hankel(e, rho, rho + T - 1, N) @ (f.Q[: a + b].T @ g12)
        y_t = -Hs @ e_t
        g3 = np.linalg.solve(f.L33, y_t)
        norms.append(float(g3 @ g3))
        rel.append(float(np.linalg.norm(y_t + f.L33 @ e_t / sigma) / np.linalg.norm(y_t)))
        sig.append(estimate_sigma(f.L33, sys.p))
    target = T * float(g12 @ g12) / N
    return {
        "check": "norm_rule", "N": N, "rho": rho, "T": T, "redraws": redraws, "seed": seed,
        "gamma3_norm2_mean": float(np.mean(norms)), "target": target,
        "ratio": float(np.mean(norms)) / target,
        "surrogate_rel_err_median": float(np.median(rel)),
        "sigma2_hat_mean": float(np.mean(sig)), "sigma2": float(sigma ** 2),
        "seconds": time.time() - t_start,
    }


def write_jsonl(records, path, header: str | None = None):
    with open(path, "w") as fh:
        if header:
            fh.write(json.dumps({"comment": header}) + "\n")
        for r in records:
            fh.write(json.dumps(r) + "\n")
