import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamma_ddpc.errors import ConfigError
from gamma_ddpc.lti import (DataSet, InputSpec, NoiseSpec, SystemModel, add_output_noise, benchmark_system,
                            dataset_from_csv, dataset_to_csv, generate_dataset, impulse_response,
                            load_system_config, simulate, snr_noise_variance)

from conftest import random_stable_system


def test_pure_feedthrough():
    s = SystemModel(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), [[1.0]], np.zeros((1, 1)))
    y, _ = simulate(s, [1.0, 2.0, 3.0])
    assert y.ravel().tolist() == [1.0, 2.0, 3.0]


def test_scalar_hand_recursion():
    s = SystemModel([[0.5]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])
    y, x = simulate(s, [1.0, 0.0, 0.0], np.zeros(3), np.zeros(1))
    assert np.allclose(y.ravel(), [0, 1, 0.5], atol=0)
    assert np.allclose(x.ravel(), [0, 1, 0.5])


def test_zero_innovation_matches_deterministic():
    rng = np.random.default_rng(0)
    s = random_stable_system(rng)
    u = rng.standard_normal((30, 1))
    y1, _ = simulate(s, u, np.zeros((30, 1)))
    y2, _ = simulate(s.with_noise(K=np.zeros((3, 1))), u)
    assert np.array_equal(y1, y2)


def test_innovation_recursion_exact():
    rng = np.random.default_rng(1)
    s = random_stable_system(rng, n=3, m=2, p=2)
    u, e = rng.standard_normal((25, 2)), rng.standard_normal((25, 2))
    x0 = rng.standard_normal(3)
    y, x = simulate(s, u, e, x0)
    xt = x0.copy()
    for t in range(25):
        assert np.allclose(y[t], s.C @ xt + s.D @ u[t] + e[t], atol=1e-13)
        assert np.allclose(x[t], xt, atol=1e-13)
        xt = s.A @ xt + s.B @ u[t] + s.K @ e[t]


def test_dimension_errors():
    with pytest.raises(ValueError):
        SystemModel(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), [[0.0]], np.zeros((2, 1)))
    s = SystemModel([[0.5]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])
    with pytest.raises(ValueError):
        simulate(s, np.ones(4), np.ones(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_simulation_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    s = random_stable_system(rng, n=3, m=1, p=2)
    u1, u2 = rng.standard_normal((2, 20, 1))
    e1, e2 = rng.standard_normal((2, 20, 2))
    x1, x2 = rng.standard_normal((2, 3))
    y1, _ = simulate(s, u1, e1, x1)
    y2, _ = simulate(s, u2, e2, x2)
    y, _ = simulate(s, a * u1 + b * u2, a * e1 + b * e2, a * x1 + b * x2)
    assert np.allclose(y, a * y1 + b * y2, atol=1e-10 * (1 + np.abs(y).max()))


def test_first_order_transfer_function_realization():
    s = benchmark_system({"transfer_function": {"num": [1.0], "den": [1.0, -0.5]}})
    assert s.n == 1 and np.isclose(s.A[0, 0], 0.5)
    assert np.allclose(impulse_response(s, 4).ravel(), [0, 1, 0.5, 0.25])


def test_identity_feedthrough_config():
    s = benchmark_system({"transfer_function": {"num": [1.0], "den": [1.0]}})
    u = np.random.default_rng(0).standard_normal(10)
    assert s.n == 0
    assert np.array_equal(simulate(s, u)[0].ravel(), u)


def test_benchmark_is_fourth_order_minimal_stable(plant):
    assert plant.n == 4 and plant.is_minimal()
    assert plant.spectral_radius() < 1
    assert np.allclose(impulse_response(plant, 5).ravel()[:4], [0, 0, 0, 0.28261])


def test_impulse_response_matches_markov(plant):
    h = impulse_response(plant, 20).ravel()
    mk = np.array([M.item() for M in plant.markov_parameters(20)])
    assert np.allclose(h, mk, rtol=1e-10, atol=1e-12 * np.abs(mk).max())


def test_non_minimal_and_unstable_configs_rejected():
    with pytest.raises(ConfigError, match="minimal"):
        benchmark_system({"state_space": {"A": np.diag([0.5, 0.3]), "B": [[1.0], [0.0]], "C": [[1.0, 1.0]], "D": [[0.0]]}})
    with pytest.raises(ConfigError, match="unstable"):
        benchmark_system({"transfer_function": {"num": [1.0], "den": [1.0, -1.5]}})


def test_snr_disabled_equals_noise_free(plant):
    d = generate_dataset(plant, 100, InputSpec(1.0), NoiseSpec("additive-output", float("inf")), seed=3)
    y, _ = simulate(plant, d.u)
    assert np.array_equal(d.y, y)


def test_snr_zero_law_of_large_numbers(plant):
    base = generate_dataset(plant, 20_000, InputSpec(1.0), NoiseSpec("additive-output", float("inf")), seed=3)
    d = add_output_noise(base, 0.0, np.random.default_rng(5))
    ratio = np.var(d.y - base.y) / np.var(base.y)
    assert 0.9 <= ratio <= 1.1


def test_snr_definition():
    y = np.random.default_rng(0).standard_normal((500, 2)) * [1.0, 3.0]
    v = snr_noise_variance(y, 13.0)
    assert np.allclose(10 * np.log10(np.var(y, axis=0) / v), 13.0)


def test_generation_deterministic(plant):
    a = generate_dataset(plant, 200, seed=11)
    b = generate_dataset(plant, 200, seed=11)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.y, b.y)
    c = generate_dataset(plant, 200, noise_spec=NoiseSpec("innovation"), seed=11)
    assert np.array_equal(c.u, a.u) and not np.array_equal(c.y, a.y)


def test_bad_variance_rejected(plant):
    with pytest.raises(ValueError):
        generate_dataset(plant, 10, InputSpec(variance=0.0))
    with pytest.raises(ValueError):
        generate_dataset(plant, 0)


def test_csv_roundtrip(tmp_path, plant):
    d = generate_dataset(plant, 50, seed=2)
    path = tmp_path / "d.csv"
    dataset_to_csv(d, path, comment="hello")
    text = path.read_text().splitlines()
    assert text[0] == "# hello" and text[1] == "t,u_1,y_1"
    back = dataset_from_csv(path)
    assert np.array_equal(back.u, d.u) and np.array_equal(back.y, d.y)


def test_state_space_yaml_with_covariances(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(
        "system:\n  state_space: {A: [[0.9]], B: [[1.0]], C: [[1.0]], D: [[0.0]]}\n"
        "  noise_covariances: {process: [[0.1]], measurement: [[1.0]]}\n"
    )
    s = load_system_config(path)
    assert s.K[0, 0] > 0 and s.predictor_spectral_radius() < 1
    assert s.sigma2[0, 0] > 1.0
