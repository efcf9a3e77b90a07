"""Experiment configuration and Monte-Carlo orchestration.

Seeds are derived from one master seed with a counter-based split
(``SeedSequence(master, spawn_key=(stream, i))``), so replica ``i`` never
depends on how many replicas are requested.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .closed_loop import MODES, ClosedLoopConfig, performance_indices, run_closed_loop
from .controllers import BETA2, BETA3, BoxConstraints, ControlWeights
from .errors import ConfigError
from .hankel import factors_from_data
from .lti import (DataSet, InputSpec, NoiseSpec, SystemModel, add_output_noise, default_system,
                  generate_dataset, load_system_config, snr_noise_variance)
from .tuning import TuneConfig

CONFIG_DIR = Path(__file__).parent / "configs"

VERIFY_DEFAULTS = {"N": 10_000, "redraws": 500, "l33_N": [2_000, 10_000, 50_000], "l33_seeds": 20,
                   "norm_rule_redraws": 100}

# seed streams
_BASE, _REPLICA, _EPISODE, _DIAG = 0, 2, 3, 4


@dataclass(frozen=True)
class Grid:
    min: float
    max: float
    points: int = 200

    def values(self) -> np.ndarray:
        if not (0 < self.min <= self.max) or self.points < 1:
            raise ConfigError(f"bad grid {self}")
        return np.logspace(np.log10(self.min), np.log10(self.max), self.points)


@dataclass(frozen=True)
class ExperimentConfig:
    system: str | None = None
    N_data: int = 250
    burn_in: int = 0
    rho: int = 20
    T: int = 20
    T_v: int = 50
    q: float = 2000.0
    r: float = 0.01
    snr_db: float = 13.0
    n_mc: int = 1000
    seed: int = 0
    grid2: Grid = Grid(1.0, 1e4, 200)
    grid3: Grid = Grid(1e-4, 1.0, 200)
    tune_points: int = 200
    tune_tol_rel: float = 1e-3
    tune_max_bisect: int = 60
    beta2_bar: float | None = None
    beta3_bar: float | None = None
    blowup_factor: float = 1e4
    cap_factor: float = 1e6
    cost_output: str = "measured"
    gamma1_rcond: float | None = None
    in_loop_noise: bool = True
    constraints: dict | None = None
    verify: dict = field(default_factory=lambda: dict(VERIFY_DEFAULTS))
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        for name in ("N_data", "rho", "T", "T_v", "n_mc", "tune_points"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.q < 0 or self.r <= 0:
            raise ConfigError("need q >= 0 and r > 0")
        if self.cost_output not in ("measured", "noise_free"):
            raise ConfigError("cost_output must be 'measured' or 'noise_free'")
        bad = set(self.verify) - set(VERIFY_DEFAULTS)
        if bad:
            raise ConfigError(f"unknown verify keys: {sorted(bad)}")
        object.__setattr__(self, "verify", {**VERIFY_DEFAULTS, **self.verify})
        if self.N_data - self.T - self.rho + 1 < (self.rho + self.T) * 2:
            raise ConfigError("N_data too short for rho and T (need N >= rows of the Hankel bundle)")

    @classmethod
    def from_mapping(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        d = dict(d or {})
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        for g in ("grid2", "grid3"):
            if g in d and not isinstance(d[g], Grid):
                gd = d[g]
                try:
                    d[g] = Grid(float(gd["min"]), float(gd["max"]), int(gd.get("points", 200)))
                except (KeyError, TypeError) as exc:
                    raise ConfigError(f"{g} needs min, max, points: {exc}") from None
        if d.get("system") and base_dir is not None and not Path(d["system"]).is_absolute():
            cand = base_dir / d["system"]
            if cand.exists():
                d["system"] = str(cand)
        for k in ("q", "r", "snr_db", "blowup_factor", "cap_factor", "tune_tol_rel"):
            if k in d:
                d[k] = float(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path=None) -> "ExperimentConfig":
        path = Path(path) if path else CONFIG_DIR / "default.yaml"
        try:
            d = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_mapping(d, path.parent)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Digest of everything that affects results (not ``out``/``workers``)."""
        d = self.to_dict()
        d.pop("out"), d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"config_hash={self.hash()} seed={self.seed}"

    def plant(self) -> SystemModel:
        return load_system_config(self.system) if self.system else default_system()

    def weights(self, p: int = 1, m: int = 1) -> ControlWeights:
        return ControlWeights.scalar(self.q, self.r, p, m)

    def box(self) -> BoxConstraints | None:
        if not self.constraints:
            return None
        return BoxConstraints(**{k: self.constraints.get(k) for k in ("u_lo", "u_hi", "y_lo", "y_hi")})


def seed_for(master: int, stream: int, i: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(stream, int(i)))


class MonteCarloSetup:
    """Plant, noise-free base record and deterministic noisy replicas for one config."""

    def __init__(self, cfg: ExperimentConfig, plant: SystemModel | None = None):
        self.cfg = cfg
        self.plant = plant if plant is not None else cfg.plant()
        self.base = generate_dataset(self.plant, cfg.N_data, InputSpec(1.0),
                                     NoiseSpec("additive-output", float("inf")),
                                     seed=cfg.seed, burn_in=cfg.burn_in)
        self.noise_variance = snr_noise_variance(self.base.y, cfg.snr_db) if np.isfinite(cfg.snr_db) \
            else np.zeros(self.plant.p)
        self._factors: dict[int, Any] = {}

    def replica(self, i: int) -> DataSet:
        d = add_output_noise(self.base, self.cfg.snr_db, np.random.default_rng(seed_for(self.cfg.seed, _REPLICA, i)))
        d.meta.update(replica=int(i))
        return d

    def factors(self, i: int):
        if i not in self._factors:
            self._factors[i] = factors_from_data(self.replica(i), self.cfg.rho, self.cfg.T)
        return self._factors[i]

    def loop_config(self) -> ClosedLoopConfig:
        c = self.cfg
        p, m = self.plant.p, self.plant.m
        tc = dict(grid_points=c.tune_points, tol_rel=c.tune_tol_rel, max_bisect=c.tune_max_bisect)
        return ClosedLoopConfig(
            T=c.T, rho=c.rho, T_v=c.T_v, weights=c.weights(p, m), cons=c.box(),
            noise_mode="additive-output",
            noise_variance=self.noise_variance if c.in_loop_noise else 0.0,
            blowup_factor=c.blowup_factor,
            tune2=TuneConfig(BETA2, (c.grid2.min, c.grid2.max), **tc),
            tune3=TuneConfig(BETA3, (c.grid3.min, c.grid3.max), **tc),
            cost_output=c.cost_output,
            gamma1_rcond=c.gamma1_rcond,
        )

    def episode(self, mode: str, i: int, beta: float | None = None):
        f = None if mode == "kalman-oracle" else self.factors(i)
        return run_closed_loop(mode, self.plant, f, self.loop_config(), seed_for(self.cfg.seed, _EPISODE, i), beta)


def _row(setup: MonteCarloSetup, mode: str, i: int, beta, keep_episode: bool):
    ep = setup.episode(mode, i, beta)
    idx = performance_indices(ep, setup.loop_config().weights)
    row = dict(episode=int(i), diverged=bool(ep.diverged), failed=ep.failed is not None,
               error=ep.failed, steps=ep.steps, betas=ep.betas.tolist(), tune_flags=len(ep.tune_flags), **idx)
    if keep_episode:
        row["_episode"] = ep
    return row


_WORKER: MonteCarloSetup | None = None


def _init_worker(cfg: ExperimentConfig, plant: SystemModel):
    global _WORKER
    _WORKER = MonteCarloSetup(cfg, plant)


def _work(args):
    mode, i, beta, keep = args
    return _row(_WORKER, mode, i, beta, keep)


def run_episodes(setup: MonteCarloSetup, mode: str, indices, beta: float | None = None,
                 workers: int = 1, keep_episodes: bool = False) -> list[dict]:
    """One result row per replica index, in index order; parallel over replicas when ``workers > 1``."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
    indices = list(indices)
    if workers <= 1 or len(indices) < 2:
        return [_row(setup, mode, i, beta, keep_episodes) for i in indices]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(setup.cfg, setup.plant)) as ex:
        chunk = max(1, len(indices) // (4 * workers))
        return list(ex.map(_work, [(mode, i, beta, keep_episodes) for i in indices], chunksize=chunk))


def cap_value(setup: MonteCarloSetup, n: int | None = None, workers: int = 1) -> float:
    """Divergence cap: ``cap_factor`` times the median Kalman-oracle cost on the replicas."""
    n = setup.cfg.n_mc if n is None else n
    rows = run_episodes(setup, "kalman-oracle", range(n), workers=workers)
    return setup.cfg.cap_factor * float(np.median([r["J"] for r in rows]))


def capped(rows, key: str, cap: float) -> np.ndarray:
    return np.array([cap if (r["diverged"] or r["failed"] or not np.isfinite(r[key])) else r[key] for r in rows])


# --- persistence -----------------------------------------------------------------------

def summary_csv(rows: list[dict], mode: str, header: str, path=None) -> str:
    online = mode.endswith("-online")
    buf = io.StringIO()
    buf.write(f"# {header} mode={mode}\n")
    w = csv.writer(buf, lineterminator="\n")
    width = max((len(r["betas"]) for r in rows), default=0) if online else 0
    w.writerow(["episode", "J", "J_u", "J_y", "diverged", "failed"] + [f"beta_{t}" for t in range(width)])
    for r in rows:
        b = list(r["betas"]) + [float("nan")] * (width - len(r["betas"])) if online else []
        w.writerow([r["episode"], repr(float(r["J"])), repr(float(r["J_u"])), repr(float(r["J_y"])),
                    int(r["diverged"]), int(r["failed"])]
                   + [repr(float(x)) for x in b])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_summary_csv(path) -> dict[str, np.ndarray]:
    """Columns J, J_u, J_y (and flags) of a summary file; malformed rows raise naming the row."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"{path}: empty summary")
    rdr = csv.reader(lines)
    head = next(rdr)
    need = ["episode", "J", "J_u", "J_y", "diverged"]
    if head[: len(need)] != need:
        raise ConfigError(f"{path}: header {head[:5]} does not match {need}")
    cols: dict[str, list] = {k: [] for k in head}
    for n, row in enumerate(rdr, start=1):
        if len(row) != len(head):
            raise ConfigError(f"{path}: row {n} has {len(row)} fields, expected {len(head)}")
        try:
            for k, v in zip(head, row):
                cols[k].append(float(v))
        except ValueError:
            raise ConfigError(f"{path}: row {n} is not numeric") from None
    return {k: np.array(v) for k, v in cols.items()}


def write_episodes_jsonl(rows: list[dict], path, header: str):
    with open(path, "w") as fh:
        fh.write(json.dumps({"comment": header}) + "\n")
        for r in rows:
            ep = r["_episode"]
            ep.to_jsonl(fh, episode=r["episode"])


def quartiles(x) -> dict:
    x = np.asarray(x, float)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return {"min": float(x.min()), "q1": float(q1), "median": float(med), "q3": float(q3), "max": float(x.max())}
