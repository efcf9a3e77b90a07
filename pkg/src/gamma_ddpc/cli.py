"""Command-line front end: generate, sweep, montecarlo, plot, verify."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .closed_loop import MODES
from .errors import ConfigError
from .experiment import (ExperimentConfig, MonteCarloSetup, capped, cap_value, quartiles, read_summary_csv,
                         run_episodes, summary_csv, write_episodes_jsonl)
from .hankel import dump_lq_csv
from .lti import dataset_to_csv
from .svgplot import box_plot, line_plot
from .tuning import oracle_sweep

log = logging.getLogger("gamma_ddpc")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out is not None:
        kw["out"] = args.out
    if args.workers is not None:
        kw["workers"] = args.workers
    if getattr(args, "n_mc", None) is not None:
        kw["n_mc"] = args.n_mc
    return cfg.replace(**kw) if kw else cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_generate(cfg: ExperimentConfig, dump_lq: bool = False) -> list[Path]:
    out = _outdir(cfg) / "data"
    out.mkdir(exist_ok=True)
    setup = MonteCarloSetup(cfg)
    head = cfg.header()
    files = [out / "base.csv"]
    dataset_to_csv(setup.base, files[0], comment=f"{head} noise-free base record")
    for i in range(cfg.n_mc):
        path = out / f"replica_{i:05d}.csv"
        d = setup.replica(i)
        dataset_to_csv(d, path, comment=f"{head} replica={i} snr_db={cfg.snr_db}")
        files.append(path)
        if dump_lq:
            dump_lq_csv(setup.factors(i), out.parent / "lq" / f"replica_{i:05d}")
    return files


def _fixed_beta(cfg: ExperimentConfig, mode: str, beta: float | None) -> float | None:
    if not mode.endswith("-fixed"):
        return None
    if beta is not None:
        return beta
    which = mode.split("-")[0]
    val = getattr(cfg, f"{which}_bar")
    if val is not None:
        return float(val)
    path = Path(cfg.out) / f"sweep_{which}.csv"
    if not path.exists():
        raise ConfigError(f"{mode} needs a beta: pass --beta, set {which}_bar, or run `sweep --mode {which}` first ({path})")
    rows = [ln.split(",") for ln in path.read_text().splitlines() if ln and not ln.startswith(("#", "beta"))]
    J = np.array([float(r[1]) for r in rows])
    return float(rows[int(np.flatnonzero(J == J.min())[0])][0])


def cmd_montecarlo(cfg: ExperimentConfig, mode: str, beta: float | None = None) -> dict:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
    out = _outdir(cfg)
    beta = _fixed_beta(cfg, mode, beta)
    setup = MonteCarloSetup(cfg)
    rows = run_episodes(setup, mode, range(cfg.n_mc), beta=beta, workers=cfg.workers, keep_episodes=True)
    head = cfg.header() + (f" beta={float(beta)!r}" if beta is not None else "")
    summary_csv(rows, mode, head, out / f"montecarlo_{mode}.csv")
    write_episodes_jsonl(rows, out / f"episodes_{mode}.jsonl", f"{head} mode={mode}")
    bad = sum(r["diverged"] or r["failed"] for r in rows)
    stats = {k: quartiles([r[k] for r in rows]) for k in ("J", "J_u", "J_y")}
    print(f"{mode}: {cfg.n_mc} episodes, {bad} diverged/failed" + (f", beta={beta:.6g}" if beta is not None else ""))
    for k, s in stats.items():
        print(f"  {k:4s} min={s['min']:.5g} q1={s['q1']:.5g} median={s['median']:.5g} q3={s['q3']:.5g} max={s['max']:.5g}")
    return stats


def cmd_sweep(cfg: ExperimentConfig, mode: str):
    if mode not in ("beta2", "beta3"):
        raise ConfigError("sweep mode must be beta2 or beta3")
    out = _outdir(cfg)
    setup = MonteCarloSetup(cfg)
    grid = (cfg.grid2 if mode == "beta2" else cfg.grid3).values()
    cap = cap_value(setup, cfg.n_mc, cfg.workers)
    res = oracle_sweep(grid, mode, cfg.n_mc, setup, workers=cfg.workers, cap=cap)
    res.to_csv(out / f"sweep_{mode}.csv", comment=f"{cfg.header()} mode={mode} cap={float(cap)!r} beta_bar={float(res.beta_bar)!r}")
    line_plot(res.betas, {"J_AV": res.J_av}, out / f"sweep_{mode}.svg", title=f"average closed-loop cost, {mode} sweep",
              xlabel=mode, ylabel="J_AV", logx=True, logy=True, marker_x=res.beta_bar)
    print(f"{mode}: beta_bar={res.beta_bar:.6g} J_AV(min)={res.J_av.min():.6g} "
          f"J_AV(first)={res.J_av[0]:.6g} J_AV(last)={res.J_av[-1]:.6g} diverged={int(res.n_diverged.sum())}")
    return res


def cmd_plot(results_dir) -> list[Path]:
    d = Path(results_dir)
    summaries = sorted(d.glob("montecarlo_*.csv"))
    sweeps = sorted(d.glob("sweep_beta*.csv"))
    if not summaries and not sweeps:
        raise ConfigError(f"no montecarlo_*.csv or sweep_*.csv files in {d}")
    cols = {p.stem[len("montecarlo_"):]: read_summary_csv(p) for p in summaries}
    written = []
    for key in ("J", "J_u", "J_y") if cols else ():
        groups = {m: c[key][np.isfinite(c[key])] for m, c in cols.items()}
        groups = {m: v for m, v in groups.items() if v.size}
        if groups:
            path = d / f"boxplot_{key}.svg"
            box_plot(groups, path, title=key, ylabel=key, logy=all(np.all(v > 0) for v in groups.values()))
            written.append(path)
    for p in sweeps:
        rows = [ln.split(",") for ln in p.read_text().splitlines() if ln and not ln.startswith(("#", "beta"))]
        try:
            b = np.array([float(r[0]) for r in rows])
            J = np.array([float(r[1]) for r in rows])
        except (ValueError, IndexError):
            raise ConfigError(f"{p}: malformed sweep row") from None
        path = p.with_suffix(".svg")
        line_plot(b, {"J_AV": J}, path, title=p.stem, xlabel=p.stem.split("_")[-1], ylabel="J_AV", logy=True,
                  marker_x=float(b[int(np.argmin(J))]))
        written.append(path)
    for w in written:
        print(w)
    return written


def cmd_verify(cfg: ExperimentConfig) -> list[dict]:
    out = _outdir(cfg)
    plant = cfg.plant()
    v = cfg.verify
    recs = [
        diagnostics.variance_check(plant, v["N"], cfg.rho, cfg.T, v["redraws"], cfg.seed),
        diagnostics.l33_limit_check(plant, v["l33_N"], v["l33_seeds"], cfg.rho, cfg.T, cfg.seed),
        diagnostics.norm_rule_check(plant, v["N"], cfg.rho, cfg.T, v["norm_rule_redraws"], cfg.seed),
    ]
    diagnostics.write_jsonl(recs, out / "verify.jsonl", cfg.header())
    p1, lm, p2 = recs
    print(f"variance formula: frob_rel={p1['frob_rel']:.4f} (sampling floor {p1['frob_sampling_floor']:.4f}), "
          f"trace ratio={p1['trace_ratio']:.4f}")
    print(f"L33 limit: median rel err {', '.join(f'N={n}: {e:.4f}' for n, e in zip(lm['Ns'], lm['median_rel_err']))}")
    print(f"gamma3 norm rule: ratio={p2['ratio']:.4f}, surrogate err={p2['surrogate_rel_err_median']:.4f}, "
          f"sigma2_hat={p2['sigma2_hat_mean']:.4f}")
    return recs


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment YAML (default: shipped configs/default.yaml)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--workers", type=int, help="worker processes for episode-level parallelism")
    common.add_argument("--out", help="output directory override")
    common.add_argument("--n-mc", dest="n_mc", type=int, help="number of replicas override")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="gamma-ddpc", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    g = sub.add_parser("generate", parents=[common], help="write the base record and noisy replicas as CSV")
    g.add_argument("--dump-lq", action="store_true", help="also dump L/Q factors of every replica")
    s = sub.add_parser("sweep", parents=[common], help="oracle grid sweep of a fixed beta")
    s.add_argument("--mode", required=True, choices=["beta2", "beta3"])
    m = sub.add_parser("montecarlo", parents=[common], help="run one controller mode over all replicas")
    m.add_argument("--mode", required=True, choices=list(MODES))
    m.add_argument("--beta", type=float, help="beta for the -fixed modes")
    p = sub.add_parser("plot", parents=[common], help="SVG box plots and sweep curves from a results directory")
    p.add_argument("results", nargs="?", help="results directory (default: --out / config out)")
    sub.add_parser("verify", parents=[common], help="Monte-Carlo checks of the prediction-error statistics")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.cmd == "generate":
            files = cmd_generate(cfg, args.dump_lq)
            print(f"wrote {len(files)} files to {Path(cfg.out) / 'data'}")
        elif args.cmd == "sweep":
            cmd_sweep(cfg, args.mode)
        elif args.cmd == "montecarlo":
            cmd_montecarlo(cfg, args.mode, args.beta)
        elif args.cmd == "plot":
            cmd_plot(args.results or cfg.out)
        elif args.cmd == "verify":
            cmd_verify(cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
