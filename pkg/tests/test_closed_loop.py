import numpy as np
import pytest

from gamma_ddpc.closed_loop import (ClosedLoopConfig, Episode, performance_indices, preview, reference_signal,
                                    run_closed_loop)
from gamma_ddpc.controllers import ControlWeights, StepProblem
from gamma_ddpc.hankel import factors_from_data
from gamma_ddpc.lti import snr_noise_variance
from gamma_ddpc.predictor import gamma1_star, z_init_from_history

W = ControlWeights.scalar(2000.0, 0.01)


def _episode(y, y_r, u):
    y, y_r, u = (np.asarray(a, float).reshape(-1, 1) for a in (y, y_r, u))
    return Episode("unreg", u, y, y, y_r, np.zeros(len(u)), np.zeros(len(u)), [])


def test_reference_examples():
    r = reference_signal(20, 50)
    assert r.shape == (70, 1) and r[0, 0] == 0
    assert abs(r[69, 0]) < 1e-12
    # 5 pi of total phase: 2.5 periods, so 5 zero crossings after t=0 including the end
    phase = 5 * np.pi * np.arange(70) / 69
    assert np.allclose(r.ravel(), np.sin(phase)) and np.isclose(phase[-1], 5 * np.pi)
    with pytest.raises(ValueError):
        reference_signal(0, 5)


def test_preview_clamps():
    r = np.arange(5.0)[:, None]
    assert preview(r, 3, 4).tolist() == [3, 4, 4, 4]


def test_performance_indices_trivial():
    e = _episode([1, 2], [1, 2], [0, 0])
    assert performance_indices(e, W) == {"J": 0.0, "J_u": 0.0, "J_y": 0.0}
    assert performance_indices(_episode([0, 0], [1, -1], [0, 0]), W)["J_y"] == 1.0


def test_performance_indices_hand_example():
    idx = performance_indices(_episode([1, 0], [0, 0], [1, 1]), W)
    assert idx["J"] == 1000.01 and idx["J_u"] == 1.0 and idx["J_y"] == np.inf


def test_oracle_noise_free_geometric_decay(plant):
    ep = run_closed_loop("kalman-oracle", plant, None, ClosedLoopConfig(), 0)
    err = np.abs(ep.y - ep.y_r).ravel()
    assert ep.steps == 50 and not ep.diverged
    # geometric decay after the delay transient, down to the floor set by the small input weight
    assert np.all(err[4:22] < 0.7 * err[3:21])
    assert err[25:].max() < 1e-5


@pytest.mark.xfail(strict=True, reason="plant has a 3-sample input delay: the first reference samples "
                   "cannot be reached, which alone gives J_y ~ 1e-2 on this reference")
def test_oracle_noise_free_relative_tracking_error(plant):
    ep = run_closed_loop("kalman-oracle", plant, None, ClosedLoopConfig(), 0)
    assert performance_indices(ep, W)["J_y"] < 1e-3


def test_determinism(plant, noisy_data):
    f = factors_from_data(noisy_data, 20, 20)
    cfg = ClosedLoopConfig(noise_variance=snr_noise_variance(noisy_data.y, 13.0), T_v=15)
    a = run_closed_loop("beta2-online", plant, f, cfg, 42)
    b = run_closed_loop("beta2-online", plant, f, cfg, 42)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.betas, b.betas)


def test_receding_horizon_and_measured_history(plant, noisy_data):
    f = factors_from_data(noisy_data, 20, 20)
    cfg = ClosedLoopConfig(noise_variance=0.2, T_v=6)
    ep = run_closed_loop("beta3-fixed", plant, f, cfg, 3, beta=0.01)
    for t in range(ep.steps):
        assert np.array_equal(ep.u[t], ep.u_plans[t][:1])
    # recompute step 5 from the recorded measurements
    hu = np.vstack([np.zeros((20, 1)), ep.u])[5:25]
    hy = np.vstack([np.zeros((20, 1)), ep.y])[5:25]
    g1 = gamma1_star(f.L11, z_init_from_history(hu, hy))
    sol = StepProblem(f, g1, preview(reference_signal(20, 6), 5, 20), cfg.weights).solve("beta3", 0.01)
    assert np.allclose(sol.u_f[0], ep.u[5, 0], rtol=1e-12)


def test_noise_free_unreg_equals_oracle(plant, noise_free_data):
    f = factors_from_data(noise_free_data, 20, 20)
    cfg = ClosedLoopConfig(gamma1_rcond=1e-10)
    a = run_closed_loop("unreg", plant, f, cfg, 0)
    b = run_closed_loop("kalman-oracle", plant, None, cfg, 0)
    assert np.allclose(a.u, b.u, atol=1e-6 * np.abs(b.u).max())


def test_blow_up_is_flagged_and_stops(plant, noisy_data):
    f = factors_from_data(noisy_data, 20, 20)
    nv = snr_noise_variance(noisy_data.y, 13.0)
    ok = run_closed_loop("unreg", plant, f, ClosedLoopConfig(noise_variance=nv), 1)
    peak = np.abs(ok.y).max()
    assert not ok.diverged and ok.steps == 50
    cfg = ClosedLoopConfig(noise_variance=nv, blowup_factor=0.5 * peak)
    ep = run_closed_loop("unreg", plant, f, cfg, 1)
    assert ep.diverged and ep.steps < 50
    assert np.abs(ep.y[-1]).max() > 0.5 * peak and np.abs(ep.y[:-1]).max() <= 0.5 * peak
    assert np.array_equal(ep.u, ok.u[: ep.steps])


def test_mode_validation(plant, noisy_data):
    f = factors_from_data(noisy_data, 20, 20)
    with pytest.raises(ValueError):
        run_closed_loop("nope", plant, f, ClosedLoopConfig(), 0)
    with pytest.raises(ValueError):
        run_closed_loop("beta2-fixed", plant, f, ClosedLoopConfig(), 0)
    with pytest.raises(ValueError):
        run_closed_loop("unreg", plant, None, ClosedLoopConfig(), 0)


def test_jsonl_records(plant, tmp_path):
    import json

    ep = run_closed_loop("kalman-oracle", plant, None, ClosedLoopConfig(T_v=4), 0)
    path = tmp_path / "e.jsonl"
    with open(path, "w") as fh:
        ep.to_jsonl(fh, episode=0)
    recs = [json.loads(ln) for ln in path.read_text().splitlines()]
    assert len(recs) == 4 and set(recs[0]) == {"t", "u", "y", "y_r", "beta", "objective", "episode"}
