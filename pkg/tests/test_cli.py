import numpy as np
import pytest

from gamma_ddpc.cli import main
from gamma_ddpc.experiment import ExperimentConfig, read_summary_csv
from gamma_ddpc.errors import ConfigError
from gamma_ddpc.lti import dataset_from_csv

SMALL = """
T_v: 8
n_mc: 2
tune_points: 30
grid2: {min: 1.0, max: 1.0e+4, points: 3}
grid3: {min: 1.0e-4, max: 1.0, points: 3}
verify: {N: 2000, redraws: 20, l33_N: [500, 2000], l33_seeds: 3, norm_rule_redraws: 5}
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def run(*args):
    return main([str(a) for a in args])


def test_generate_files_and_determinism(cfg_path, tmp_path):
    out = tmp_path / "a"
    assert run("generate", "--config", cfg_path, "--out", out) == 0
    files = sorted((out / "data").iterdir())
    assert [f.name for f in files] == ["base.csv", "replica_00000.csv", "replica_00001.csv"]
    first = (out / "data" / "replica_00001.csv").read_text()
    assert run("generate", "--config", cfg_path, "--out", tmp_path / "b", "--n-mc", 4) == 0
    again = (tmp_path / "b" / "data" / "replica_00001.csv").read_text()
    assert again.splitlines()[1:] == first.splitlines()[1:]
    assert first.startswith("# config_hash=")


def test_replica_snr(cfg_path, tmp_path):
    # noise has the exact population variance, so the SNR measured on 250 samples
    # scatters with std ~ 4.34 * sqrt(2/250) = 0.39 dB around 13 dB
    run("generate", "--config", cfg_path, "--out", tmp_path, "--n-mc", 200)
    base = dataset_from_csv(tmp_path / "data" / "base.csv")
    snr = []
    for i in range(200):
        d = dataset_from_csv(tmp_path / "data" / f"replica_{i:05d}.csv")
        snr.append(10 * np.log10(np.var(base.y) / np.var(d.y - base.y)))
    snr = np.array(snr)
    assert abs(np.median(snr) - 13.0) < 0.15
    assert np.mean(np.abs(snr - 13.0) <= 0.5) >= 0.7


def test_dump_lq(cfg_path, tmp_path):
    run("generate", "--config", cfg_path, "--out", tmp_path, "--dump-lq")
    assert (tmp_path / "lq" / "replica_00000" / "L33.csv").exists()


def test_montecarlo_reproducible_and_schema(cfg_path, tmp_path):
    for d in ("a", "b"):
        assert run("montecarlo", "--config", cfg_path, "--out", tmp_path / d, "--mode", "beta2-online") == 0
    a = (tmp_path / "a" / "montecarlo_beta2-online.csv").read_text()
    assert a == (tmp_path / "b" / "montecarlo_beta2-online.csv").read_text()
    cols = read_summary_csv(tmp_path / "a" / "montecarlo_beta2-online.csv")
    assert all(f"beta_{t}" in cols for t in range(8)) and cols["J"].size == 2
    assert (tmp_path / "a" / "episodes_beta2-online.jsonl").exists()


def test_oracle_mode_noise_off(tmp_path):
    p = tmp_path / "nf.yaml"
    p.write_text("n_mc: 3\nin_loop_noise: false\nsnr_db: .inf\ngamma1_rcond: 1.0e-10\n")
    assert run("montecarlo", "--config", p, "--out", tmp_path, "--mode", "kalman-oracle") == 0
    cols = read_summary_csv(tmp_path / "montecarlo_kalman-oracle.csv")
    assert np.all(np.isfinite(cols["J_y"]))


def test_sweep_rows_and_argmin(cfg_path, tmp_path, capsys):
    assert run("sweep", "--config", cfg_path, "--out", tmp_path, "--mode", "beta2") == 0
    lines = [ln for ln in (tmp_path / "sweep_beta2.csv").read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == "beta,J_av,J_u_av,J_y_av,n_diverged" and len(lines) == 4
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    bar = rows[np.argmin(rows[:, 1]), 0]
    assert f"beta_bar={bar:.6g}" in capsys.readouterr().out
    assert (tmp_path / "sweep_beta2.svg").read_text().startswith("<svg")
    # fixed mode picks beta_bar from the sweep file
    assert run("montecarlo", "--config", cfg_path, "--out", tmp_path, "--mode", "beta2-fixed") == 0
    assert f"beta={float(bar)!r}" in (tmp_path / "montecarlo_beta2-fixed.csv").read_text().splitlines()[0]


def test_plot(cfg_path, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("plot", empty) == 2 and not list(empty.iterdir())
    run("montecarlo", "--config", cfg_path, "--out", tmp_path, "--mode", "kalman-oracle")
    assert run("plot", tmp_path) == 0
    assert sorted(p.name for p in tmp_path.glob("*.svg")) == ["boxplot_J.svg", "boxplot_J_u.svg", "boxplot_J_y.svg"]


def test_plot_malformed_row(tmp_path, capsys):
    (tmp_path / "montecarlo_unreg.csv").write_text("episode,J,J_u,J_y,diverged,failed\n0,1,2,3,0,0\n1,oops,2,3,0,0\n")
    assert run("plot", tmp_path) == 2
    assert "row 2" in capsys.readouterr().err


def test_fixed_mode_without_beta_errors(cfg_path, tmp_path, capsys):
    assert run("montecarlo", "--config", cfg_path, "--out", tmp_path, "--mode", "beta3-fixed") == 2
    assert "needs a beta" in capsys.readouterr().err


def test_verify(cfg_path, tmp_path):
    assert run("verify", "--config", cfg_path, "--out", tmp_path) == 0
    assert len((tmp_path / "verify.jsonl").read_text().splitlines()) == 4


def test_config_validation(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("nonsense: 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    with pytest.raises(ConfigError):
        ExperimentConfig(N_data=50)
    d = ExperimentConfig.load()
    assert (d.N_data, d.T, d.T_v, d.q, d.r, d.snr_db, d.n_mc, d.grid2.points) == (250, 20, 50, 2000.0, 0.01, 13.0, 1000, 200)
    assert d.hash() == d.replace(out="x", workers=4).hash() != d.replace(seed=1).hash()


def test_parallel_matches_serial():
    from gamma_ddpc.experiment import MonteCarloSetup, run_episodes

    s = MonteCarloSetup(ExperimentConfig(n_mc=3, T_v=6, tune_points=20))
    a = run_episodes(s, "beta3-online", range(3))
    b = run_episodes(s, "beta3-online", range(3), workers=2)
    assert [r["J"] for r in a] == [r["J"] for r in b]


def test_replicas_independent_of_count():
    from gamma_ddpc.experiment import MonteCarloSetup

    a = MonteCarloSetup(ExperimentConfig(n_mc=2)).replica(1)
    b = MonteCarloSetup(ExperimentConfig(n_mc=50)).replica(1)
    assert np.array_equal(a.y, b.y)
