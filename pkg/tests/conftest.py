import numpy as np
import pytest

from gamma_ddpc import default_system
from gamma_ddpc.lti import InputSpec, NoiseSpec, SystemModel, generate_dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def plant():
    return default_system()


@pytest.fixture(scope="session")
def noise_free_data(plant):
    return generate_dataset(plant, 250, InputSpec(1.0), NoiseSpec("additive-output", float("inf")), seed=7)


@pytest.fixture(scope="session")
def noisy_data(plant):
    return generate_dataset(plant, 250, InputSpec(1.0), NoiseSpec("additive-output", 13.0), seed=7)


def random_stable_system(rng, n=3, m=1, p=1, radius=0.8, K=True):
    A = rng.standard_normal((n, n))
    A *= radius / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m))
    Kg = 0.1 * rng.standard_normal((n, p)) if K else np.zeros((n, p))
    return SystemModel(A, B, C, D, Kg, 1.0)


@pytest.fixture(scope="session")
def variance_result(plant):
    from gamma_ddpc.diagnostics import variance_check

    return variance_check(plant, N=10_000, rho=20, T=20, redraws=500, seed=0)


@pytest.fixture(scope="session")
def noisy_factors(noisy_data):
    from gamma_ddpc.hankel import factors_from_data

    return factors_from_data(noisy_data, 20, 20)
