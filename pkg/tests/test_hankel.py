import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamma_ddpc.hankel import build_bundle, factors_from_data, hankel, lq_decompose, lq_factor
from gamma_ddpc.kernels import backends
from gamma_ddpc.lti import DataSet


def test_scalar_example():
    H = hankel([1, 2, 3, 4], 0, 1, 2)
    assert np.allclose(H, np.array([[1, 2], [2, 3]]) / np.sqrt(2))


def test_single_column():
    H = hankel(np.arange(5.0), 1, 3, 1)
    assert np.allclose(H.ravel(), [1, 2, 3])


def test_block_case_elementwise():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((12, 2))
    t0, t1, N = 2, 4, 6
    H = hankel(w, t0, t1, N)
    for i in range(t1 - t0 + 1):
        for j in range(N):
            assert np.allclose(H[2 * i: 2 * i + 2, j], w[t0 + i + j] / np.sqrt(N))


def test_short_data_names_required_length():
    with pytest.raises(ValueError, match="at least 7"):
        hankel(np.arange(5.0), 0, 2, 5)


def test_bundle_shapes_and_naive_oracle():
    rng = np.random.default_rng(1)
    d = DataSet(rng.standard_normal((250, 1)), rng.standard_normal((250, 1)))
    with pytest.warns(UserWarning):
        b = build_bundle(d, 20, 20)
    assert b.N == 211 and b.Zp.shape == (40, 211)
    z = d.z
    for i in range(20):
        for j in range(b.N):
            assert np.isclose(b.Uf[i, j], d.u[20 + i + j, 0] / np.sqrt(b.N), rtol=1e-15, atol=0)
    assert np.allclose(b.Zp[:2, 5], z[5] / np.sqrt(b.N))


def test_tiny_bundle():
    d = DataSet(np.arange(3.0)[:, None], np.arange(3.0)[:, None])
    with pytest.warns(UserWarning):
        b = build_bundle(d, 1, 1)
    assert b.N == 2 and b.Zp.shape == (2, 2)


def test_bundle_too_short():
    d = DataSet(np.ones((5, 1)), np.ones((5, 1)))
    with pytest.raises(ValueError):
        build_bundle(d, 3, 3)


def test_fixed_point():
    rng = np.random.default_rng(2)
    L = np.tril(rng.standard_normal((4, 4)))
    L[np.diag_indices(4)] = np.abs(np.diag(L)) + 0.5
    M = np.hstack([L, np.zeros((4, 3))])
    L2, Q2 = lq_factor(M)
    assert np.allclose(L2, L) and np.allclose(Q2, np.eye(4, 7))


def test_random_reconstruction():
    M = np.random.default_rng(3).standard_normal((6, 40))
    L, Q = lq_factor(M)
    assert np.linalg.norm(L @ Q - M) / np.linalg.norm(M) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 4), st.sampled_from([(1, 1), (2, 1), (1, 2)]))
def test_lq_invariants(seed, rho, T, mp):
    m, p = mp
    rng = np.random.default_rng(seed)
    Nd = 8 * (m + p) * (rho + T) + rho + T
    d = DataSet(rng.standard_normal((Nd, m)), rng.standard_normal((Nd, p)))
    b = build_bundle(d, rho, T)
    f = lq_decompose(b)
    M = b.stacked
    assert np.linalg.norm(f.L @ f.Q - M) / np.linalg.norm(M) < 1e-10
    assert np.abs(f.Q @ f.Q.T - np.eye(M.shape[0])).max() < 1e-10
    assert np.allclose(f.L, np.tril(f.L))
    assert np.all(np.diag(f.L) > 0) and not f.rank_deficient
    for i, j in [(1, 2), (1, 3), (2, 3)]:
        assert np.abs(f.block(i, j)).max() == 0
    # scale equivariance
    c = 3.7
    g = lq_decompose(build_bundle(DataSet(c * d.u, c * d.y), rho, T))
    assert np.allclose(g.L, c * f.L, atol=1e-10 * c * np.abs(f.L).max())
    assert np.allclose(g.Q, f.Q, atol=1e-9)


def test_noise_free_l33_vanishes(noise_free_data):
    f = factors_from_data(noise_free_data, 20, 20)
    assert np.linalg.norm(f.L33) / np.linalg.norm(f.L31) < 1e-6
    assert f.rank_deficient


def test_too_few_columns_raises():
    rng = np.random.default_rng(0)
    d = DataSet(rng.standard_normal((30, 1)), rng.standard_normal((30, 1)))
    with pytest.warns(UserWarning):
        b = build_bundle(d, 6, 6)
    with pytest.raises(ValueError):
        lq_decompose(b)


def test_kernel_backends_agree():
    rng = np.random.default_rng(4)
    w = rng.standard_normal((60, 3))
    impls = backends()
    ref = impls["python"].hankel(w, 2, 7, 40)
    for name, mod in impls.items():
        assert np.allclose(mod.hankel(w, 2, 7, 40), ref, rtol=1e-15, atol=0), name
