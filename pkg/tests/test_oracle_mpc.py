import numpy as np
import pytest

from gamma_ddpc.controllers import BoxConstraints, ControlWeights
from gamma_ddpc.errors import QpError
from gamma_ddpc.lti import SystemModel, impulse_response, simulate
from gamma_ddpc.oracle_mpc import (KalmanState, kalman_gain_from_covariances, kalman_step, observability_matrix,
                                   solve_mpc, toeplitz_hd)

from conftest import random_stable_system

W = ControlWeights.scalar(2000.0, 0.01)


def test_zero_innovation_step():
    s = random_stable_system(np.random.default_rng(0))
    x, u = np.array([1.0, -1.0, 0.5]), np.array([0.3])
    y = s.C @ x + s.D @ u
    assert np.allclose(kalman_step(s, KalmanState(x), u, y).x_hat, s.A @ x + s.B @ u)


def test_open_loop_observer_when_k_zero(plant):
    x = np.ones(4)
    a = kalman_step(plant, KalmanState(x), [1.0], [100.0]).x_hat
    b = kalman_step(plant, KalmanState(x), [1.0], [-5.0]).x_hat
    assert np.array_equal(a, b)


def test_observer_tracks_noise_free_state():
    rng = np.random.default_rng(1)
    s = random_stable_system(rng)
    x0, u = rng.standard_normal(3), rng.standard_normal((30, 1))
    y, x = simulate(s, u, x0=x0)
    ks = KalmanState(x0)
    for t in range(30):
        assert np.allclose(ks.x_hat, x[t], atol=1e-12)
        ks = kalman_step(s, ks, u[t], y[t])


def test_origin_is_optimal(plant):
    assert np.allclose(solve_mpc(plant, np.zeros(4), np.zeros(20), W).u_f, 0)


def test_scalar_one_step_closed_form():
    s = SystemModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]], np.zeros((0, 1)))
    u = solve_mpc(s, np.zeros(0), [1.0], W, T=1).u_f[0]
    # d/du [2000 (u-1)^2 + 0.01 u^2] = 0
    assert np.isclose(u, 2000 / 2000.01, rtol=1e-14)


def test_prediction_matrices_match_impulse_response(plant):
    T = 12
    h = impulse_response(plant, T).ravel()
    Hd = toeplitz_hd(plant, T)
    for i in range(T):
        for j in range(T):
            assert abs(Hd[i, j] - (h[i - j] if i >= j else 0.0)) <= 1e-10 * np.abs(h).max()
    x0 = np.random.default_rng(2).standard_normal(4)
    y, _ = simulate(plant, np.zeros((T, 1)), x0=x0)
    assert np.allclose(observability_matrix(plant, T) @ x0, y.ravel(), atol=1e-10)


def test_riccati_gain_fixed_point():
    A = np.array([[0.9, 0.2], [0.0, 0.7]])
    C = np.array([[1.0, 0.0]])
    Wn, V = 0.1 * np.eye(2), np.array([[0.5]])
    K, Re = kalman_gain_from_covariances(A, C, Wn, V)
    P = np.eye(2)
    for _ in range(2000):
        Kp = A @ P @ C.T @ np.linalg.inv(C @ P @ C.T + V)
        P = A @ P @ A.T + Wn - Kp @ (C @ P @ C.T + V) @ Kp.T
    assert np.allclose(K, A @ P @ C.T @ np.linalg.inv(C @ P @ C.T + V), atol=1e-10)
    assert np.abs(np.linalg.eigvals(A - K @ C)).max() < 1


def test_infeasible_box_raises(plant):
    cons = BoxConstraints(u_lo=[1.0], u_hi=[1.0], y_lo=[5.0], y_hi=[5.0])
    with pytest.raises(QpError):
        solve_mpc(plant, np.zeros(4), np.zeros(5), W, cons, T=5)


def test_input_box_respected(plant):
    cons = BoxConstraints(u_lo=[-0.2], u_hi=[0.2])
    sol = solve_mpc(plant, np.zeros(4), np.ones(20), W, cons)
    assert np.abs(sol.u_f).max() <= 0.2 + 1e-9
