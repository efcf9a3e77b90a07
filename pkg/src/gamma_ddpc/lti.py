"""Innovation-form LTI plants: simulation, dataset generation, benchmark realization."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import scipy.signal

from . import kernels
from .errors import ConfigError

RANK_TOL = 1e-8


def _mat(a, rows=None, cols=None, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        a = a.reshape(rows or 0, cols or 0)
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def numerical_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def controllability_matrix(A, B):
    n = A.shape[0]
    blocks, Ak = [], B
    for _ in range(n):
        blocks.append(Ak)
        Ak = A @ Ak
    return np.hstack(blocks) if blocks else np.zeros((0, B.shape[1]))


def observability_matrix_full(A, C):
    n = A.shape[0]
    blocks, CA = [], C
    for _ in range(n):
        blocks.append(CA)
        CA = CA @ A
    return np.vstack(blocks) if blocks else np.zeros((C.shape[0], 0))


@dataclass(frozen=True)
class SystemModel:
    """Minimal innovation-form plant x+ = Ax + Bu + Ke, y = Cx + Du + e, Var[e] = sigma2."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    K: np.ndarray
    sigma2: Any = 1.0
    name: str = ""

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = np.zeros((0, 0))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        p, m = D.shape
        B = _mat(self.B, n, m, "B") if n else np.zeros((0, m))
        C = _mat(self.C, p, n, "C") if n else np.zeros((p, 0))
        K = _mat(self.K, n, p, "K") if n else np.zeros((0, p))
        s2 = np.asarray(self.sigma2, dtype=float)
        if s2.ndim == 0:
            s2 = s2 * np.eye(p)
        s2 = np.atleast_2d(s2)
        if s2.shape != (p, p):
            raise ValueError(f"sigma2 must be scalar or {p}x{p}")
        if np.any(np.linalg.eigvalsh((s2 + s2.T) / 2) < 0):
            raise ValueError("sigma2 must be positive semidefinite")
        for k, v in dict(A=A, B=B, C=C, D=D, K=K, sigma2=s2).items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{k} has non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[0]

    def is_minimal(self, tol: float = RANK_TOL) -> bool:
        if self.n == 0:
            return True
        return (
            numerical_rank(controllability_matrix(self.A, self.B), tol) == self.n
            and numerical_rank(observability_matrix_full(self.A, self.C), tol) == self.n
        )

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A)))) if self.n else 0.0

    def predictor_spectral_radius(self) -> float:
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.A - self.K @ self.C))))

    def markov_parameters(self, count: int, noise: bool = False) -> list[np.ndarray]:
        """D, CB, CAB, ... (or I, CK, CAK, ... with ``noise=True``)."""
        first = np.eye(self.p) if noise else self.D
        G = self.K if noise else self.B
        out = [first]
        X = G
        for _ in range(count - 1):
            out.append(self.C @ X if self.n else np.zeros_like(first))
            X = self.A @ X
        return out

    def with_noise(self, K=None, sigma2=None) -> "SystemModel":
        return SystemModel(
            self.A, self.B, self.C, self.D,
            self.K if K is None else K,
            self.sigma2 if sigma2 is None else sigma2,
            self.name,
        )


@dataclass
class DataSet:
    """Recorded samples u (N x m) and y (N x p); ``meta`` carries provenance."""

    u: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.u), -1)
        self.y = np.asarray(self.y, dtype=float).reshape(len(self.y), -1)
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError(f"u has {self.u.shape[0]} samples but y has {self.y.shape[0]}")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self):
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def z(self) -> np.ndarray:
        """Joint samples [u(t); y(t)] stacked row-wise."""
        return np.hstack([self.u, self.y])


@dataclass(frozen=True)
class InputSpec:
    variance: float = 1.0
    seed: int | None = None


@dataclass(frozen=True)
class NoiseSpec:
    mode: str = "additive-output"  # or "innovation"
    snr_db: float = 13.0


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh((S + S.T) / 2)
    return V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _as_seq(a, width, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if width == 1 else a.reshape(1, -1)
    if a.ndim != 2 or a.shape[1] != width:
        raise ValueError(f"{name} must have {width} columns, got shape {a.shape}")
    return a


def simulate(sys: SystemModel, u_seq, e_seq=None, x0=None):
    """Simulate the innovation-form recursion.

    Returns ``(y_seq, x_seq)``, both of length ``len(u_seq)``; ``x_seq[t]`` is the
    state at which ``y_seq[t]`` was produced.
    """
    u = _as_seq(u_seq, sys.m, "u_seq")
    e = np.zeros((u.shape[0], sys.p)) if e_seq is None else _as_seq(e_seq, sys.p, "e_seq")
    if e.shape[0] != u.shape[0]:
        raise ValueError(f"u_seq has {u.shape[0]} samples but e_seq has {e.shape[0]}")
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).ravel()
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have length {sys.n}")
    y, x = kernels.simulate(sys.A, sys.B, sys.C, sys.D, sys.K, u, e, x0)
    return y, x[:-1]


def impulse_response(sys: SystemModel, count: int) -> np.ndarray:
    """Output sequence for a unit impulse on each input; shape (count, p, m)."""
    out = np.zeros((count, sys.p, sys.m))
    for j in range(sys.m):
        u = np.zeros((count, sys.m))
        u[0, j] = 1.0
        y, _ = simulate(sys, u)
        out[:, :, j] = y
    return out


def snr_noise_variance(y_clean: np.ndarray, snr_db: float) -> np.ndarray:
    """Per-channel noise variance giving ``snr_db`` against the empirical output variance."""
    var = np.var(np.asarray(y_clean).reshape(len(y_clean), -1), axis=0)
    return var / 10.0 ** (snr_db / 10.0)


def add_output_noise(base: DataSet, snr_db: float, rng: np.random.Generator) -> DataSet:
    """Corrupt the outputs of a noise-free record with white noise at ``snr_db``."""
    if not np.isfinite(snr_db):
        return DataSet(base.u.copy(), base.y.copy(), dict(base.meta, snr_db=snr_db))
    var = snr_noise_variance(base.y, snr_db)
    if np.any(var <= 0):
        raise ValueError("noise-free output has zero variance; SNR undefined")
    v = rng.standard_normal(base.y.shape) * np.sqrt(var)
    meta = dict(base.meta, snr_db=float(snr_db), noise_variance=var.tolist())
    return DataSet(base.u.copy(), base.y + v, meta)


def generate_dataset(
    sys: SystemModel,
    N_data: int,
    input_spec: InputSpec = InputSpec(),
    noise_spec: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    burn_in: int = 0,
) -> DataSet:
    """Excite ``sys`` with white Gaussian input and record ``N_data`` samples.

    ``additive-output`` mode simulates noise-free and adds output noise at
    ``snr_db`` (``inf`` disables it); ``innovation`` mode drives the plant with
    e ~ N(0, sigma2). ``burn_in`` samples from rest are discarded first.
    """
    if N_data <= 0:
        raise ValueError("N_data must be positive")
    if input_spec.variance <= 0:
        raise ValueError("input variance must be positive")
    in_seed = input_spec.seed if input_spec.seed is not None else np.random.SeedSequence(seed, spawn_key=(0,))
    rng_u = np.random.default_rng(in_seed)
    rng_e = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    total = N_data + burn_in
    u = rng_u.standard_normal((total, sys.m)) * np.sqrt(input_spec.variance)
    meta = dict(seed=seed, mode=noise_spec.mode, N_data=N_data, input_variance=input_spec.variance)
    if noise_spec.mode == "innovation":
        e = rng_e.standard_normal((total, sys.p)) @ psd_sqrt(sys.sigma2).T
        y, _ = simulate(sys, u, e)
        meta.update(snr_db=None, innovation_variance=np.diag(sys.sigma2).tolist())
        return DataSet(u[burn_in:], y[burn_in:], meta)
    if noise_spec.mode != "additive-output":
        raise ValueError(f"unknown noise mode {noise_spec.mode!r}")
    y, _ = simulate(sys, u)
    base = DataSet(u[burn_in:], y[burn_in:], meta)
    return add_output_noise(base, noise_spec.snr_db, rng_e)


# --- realization -----------------------------------------------------------------

def minimal_realization(A, B, C, D, tol: float = RANK_TOL):
    """Drop uncontrollable then unobservable modes (SVD-based Kalman decomposition)."""
    n = A.shape[0]
    if n == 0:
        return A, B, C, D
    U, s, _ = np.linalg.svd(controllability_matrix(A, B))
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    if r < n:
        T = U[:, :r]
        A, B, C = T.T @ A @ T, T.T @ B, C @ T
    if r == 0:
        return A, B, C, D
    _, s, Vt = np.linalg.svd(observability_matrix_full(A, C))
    r2 = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    if r2 < A.shape[0]:
        T = Vt[:r2].T
        A, B, C = T.T @ A @ T, T.T @ B, C @ T
    return A, B, C, D


def benchmark_system(config: Mapping[str, Any]) -> SystemModel:
    """Build a minimal SystemModel from a config mapping.

    Accepted keys: ``transfer_function: {num, den}`` (descending powers of z,
    SISO) or ``state_space: {A, B, C, D[, K]}``; optional ``K``,
    ``noise_covariances: {process, measurement[, cross]}`` (steady-state Kalman
    gain), ``sigma2``, ``stability_tol``.
    """
    name = str(config.get("name", ""))
    if "transfer_function" in config:
        tf = config["transfer_function"]
        num = np.atleast_1d(np.asarray(tf["num"], dtype=float))
        den = np.atleast_1d(np.asarray(tf["den"], dtype=float))
        if den.size == 0 or den[0] == 0:
            raise ConfigError("transfer_function.den must have a nonzero leading coefficient")
        if num.size > den.size:
            raise ConfigError("transfer_function is improper (num degree > den degree)")
        if den.size == 1:
            A, B, C = np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0))
            D = np.array([[num[-1] / den[0]]])
        else:
            A, B, C, D = scipy.signal.tf2ss(num, den)
        n_before = A.shape[0]
        A, B, C, D = minimal_realization(A, B, C, D)
        if A.shape[0] < n_before:
            name = name or "tf"
    elif "state_space" in config:
        ssc = config["state_space"]
        try:
            A = np.atleast_2d(np.asarray(ssc["A"], dtype=float))
            B = np.atleast_2d(np.asarray(ssc["B"], dtype=float))
            C = np.atleast_2d(np.asarray(ssc["C"], dtype=float))
            D = np.atleast_2d(np.asarray(ssc.get("D", np.zeros((C.shape[0], B.shape[1]))), dtype=float))
        except KeyError as exc:
            raise ConfigError(f"state_space is missing {exc}") from None
    else:
        raise ConfigError("system config needs 'transfer_function' or 'state_space'")

    n, p = A.shape[0], C.shape[0]
    if "K" in config or ("state_space" in config and "K" in config["state_space"]):
        K = config.get("K", config.get("state_space", {}).get("K"))
        K = np.asarray(K, dtype=float).reshape(n, p)
    elif "noise_covariances" in config and n:
        from .oracle_mpc import kalman_gain_from_covariances

        nc = config["noise_covariances"]
        K, S_e = kalman_gain_from_covariances(
            A, C, np.atleast_2d(nc["process"]), np.atleast_2d(nc["measurement"]),
            None if nc.get("cross") is None else np.atleast_2d(nc["cross"]),
        )
        config = dict(config, sigma2=config.get("sigma2", S_e))
    else:
        K = np.zeros((n, p))
    try:
        sys = SystemModel(A, B, C, D, K, config.get("sigma2", 1.0), name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not sys.is_minimal():
        raise ConfigError(
            f"realization of order {sys.n} is not minimal "
            f"(controllability rank {numerical_rank(controllability_matrix(sys.A, sys.B))}, "
            f"observability rank {numerical_rank(observability_matrix_full(sys.A, sys.C))})"
        )
    tol = float(config.get("stability_tol", 1e-9))
    if sys.spectral_radius() >= 1.0 + tol and not config.get("allow_unstable", False):
        raise ConfigError(f"plant is unstable: spectral radius {sys.spectral_radius():.6g}")
    if sys.n and sys.predictor_spectral_radius() >= 1.0:
        raise ConfigError(
            f"A - KC has spectral radius {sys.predictor_spectral_radius():.6g} >= 1"
        )
    return sys


def load_system_config(path) -> SystemModel:
    import yaml

    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return benchmark_system(cfg.get("system", cfg))


def default_system() -> SystemModel:
    """The shipped flexible-transmission benchmark (configs/flexible_transmission.yaml)."""
    return load_system_config(Path(__file__).parent / "configs" / "flexible_transmission.yaml")


# --- CSV persistence ---------------------------------------------------------------

def dataset_to_csv(data: DataSet, path=None, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"u_{i + 1}" for i in range(data.m)] + [f"y_{i + 1}" for i in range(data.p)])
    for t in range(len(data)):
        w.writerow([t] + [repr(float(v)) for v in data.u[t]] + [repr(float(v)) for v in data.y[t]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def dataset_from_csv(path) -> DataSet:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if not header or header[0] != "t":
        raise ValueError(f"{path}: header must start with 't'")
    ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y_")]
    rows = np.array([[float(v) for v in r] for r in reader], dtype=float)
    if rows.size == 0:
        raise ValueError(f"{path}: no data rows")
    return DataSet(rows[:, ucols], rows[:, ycols], {"source": str(path)})
