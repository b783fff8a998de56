import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st

from reflected_mmbm.errors import NonFinite, NotBalanced, NotIrreducible
from reflected_mmbm.kernels import (expm_integral, matrix_exponential, quadratic_residual,
                                    riccati_fixed_point, _riccati_coefficients,
                                    solve_riccati_min_nonneg, solvent_pair, stationary_vector)
from reflected_mmbm.model import FluidModel, build_fluid_approximation, validate_model

from conftest import random_model


def taylor_expm(A, terms=80):
    # oracle: plain power series with scaling and squaring by 2^s
    s = max(0, int(np.ceil(np.log2(max(np.abs(A).sum(axis=1).max(), 1e-300)))) + 1)
    B = A / 2**s
    E = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms):
        term = term @ B / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def test_expm_examples():
    np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(matrix_exponential([[0, 1], [0, 0]]), [[1, 1], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(matrix_exponential(np.diag([-2.0, 0.0])),
                               np.diag([np.exp(-2), 1]), rtol=1e-15)


def test_expm_rejects_nonfinite():
    with pytest.raises(NonFinite):
        matrix_exponential([[np.nan]])


@pytest.mark.parametrize("seed", range(5))
def test_expm_matches_series(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4)) * 3
    E = matrix_exponential(A)
    np.testing.assert_allclose(E, taylor_expm(A), rtol=1e-12, atol=1e-12 * np.abs(E).max())


def test_expm_generator_large_norm():
    # ||A|| up to 1e3: the exponential of a generator is stochastic
    rng = np.random.default_rng(1)
    Q = rng.uniform(0, 300, size=(4, 4))
    np.fill_diagonal(Q, 0)
    Q -= np.diag(Q.sum(axis=1))
    E = matrix_exponential(Q)
    np.testing.assert_allclose(E.sum(axis=1), 1, atol=1e-12)
    assert E.min() >= -1e-14


def test_expm_integral_examples():
    np.testing.assert_allclose(expm_integral(np.zeros((2, 2)), 2.0), 2 * np.eye(2), atol=1e-15)
    assert expm_integral([[-2.0]], 1.0)[0, 0] == pytest.approx((1 - np.exp(-2)) / 2, rel=1e-14)
    assert expm_integral([[-2.0]], 1.0)[0, 0] == pytest.approx(0.4323324, abs=1e-7)
    np.testing.assert_allclose(expm_integral(np.diag([-1.0, 0.0]), 1.0),
                               np.diag([1 - np.exp(-1), 1.0]), atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
def test_expm_integral_vs_quadrature(seed):
    rng = np.random.default_rng(100 + seed)
    K = rng.normal(size=(3, 3))
    b = rng.uniform(0.2, 2.0)
    ref, _ = scipy.integrate.quad_vec(lambda x: matrix_exponential(K * x), 0, b, epsabs=1e-13,
                                      epsrel=1e-13)
    np.testing.assert_allclose(expm_integral(K, b), ref, atol=1e-9)


def test_stationary_vector_examples():
    np.testing.assert_allclose(stationary_vector([[-1, 1], [1, -1]]), [0.5, 0.5], rtol=1e-15)
    a, c = 0.7, 3.1
    np.testing.assert_allclose(stationary_vector([[-a, a], [c, -c]]), [c / (a + c), a / (a + c)],
                               rtol=1e-14)
    np.testing.assert_allclose(stationary_vector([[0, 1], [1, 0]]), [0.5, 0.5], rtol=1e-15)


def test_stationary_vector_errors():
    with pytest.raises(NotBalanced):
        stationary_vector([[-1, 2], [1, -1]])
    with pytest.raises(NotIrreducible):
        stationary_vector([[1, 0], [0, 1]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8))
def test_stationary_vector_residual(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.uniform(0.01, 5, size=(n, n))
    np.fill_diagonal(G, 0)
    G -= np.diag(G.sum(axis=1))
    nu = stationary_vector(G)
    assert nu.min() >= 0 and nu.sum() == pytest.approx(1, abs=1e-15)
    assert np.abs(nu @ G).max() <= 1e-12 * np.abs(G).max()


def scalar_fluid(T, C):
    return FluidModel(1.0, np.asarray(T, float), np.asarray(C, float))


@pytest.mark.parametrize("T, expected", [
    ([[-1, 1], [2, -2]], 0.5),   # 2 psi^2 - 3 psi + 1 = 0, roots 1/2 and 1
    ([[-2, 2], [1, -1]], 1.0),   # roots 1 and 2
    ([[-1, 1], [1, -1]], 1.0),   # double root
])
def test_scalar_riccati(T, expected):
    psi = solve_riccati_min_nonneg(scalar_fluid(T, [1, -1]), "down")
    # a double root is only determined to about sqrt(machine epsilon)
    tol = 5e-8 if T == [[-1, 1], [1, -1]] else 1e-13
    assert psi[0, 0] == pytest.approx(expected, abs=tol)


def test_scalar_riccati_up():
    psi_star = solve_riccati_min_nonneg(scalar_fluid([[-1, 1], [2, -2]], [1, -1]), "up")
    assert psi_star[0, 0] == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("direction", ["down", "up"])
def test_riccati_minimal_and_residual(seed, direction):
    model = random_model(np.random.default_rng(seed), 3)
    fluid = build_fluid_approximation(model, 0.1)
    coeffs = _riccati_coefficients(fluid, direction)
    X = solve_riccati_min_nonneg(fluid, direction)
    A0, A1, A2, A3 = coeffs
    scale = max(np.abs(a).max() for a in coeffs)
    R = A0 + A1 @ X + X @ A2 + X @ A3 @ X
    assert np.abs(R).max() <= 1e-12 * scale
    assert X.min() >= 0 and X.sum(axis=1).max() <= 1 + 1e-12
    Xfp, _, _ = riccati_fixed_point(*coeffs)
    np.testing.assert_allclose(X, Xfp, atol=1e-10)


def test_newton_and_fixed_point_agree_through_api(m2):
    fluid = build_fluid_approximation(m2, 0.2)
    a = solve_riccati_min_nonneg(fluid, "down")
    b = solve_riccati_min_nonneg(fluid, "down", method="fixed_point")
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_solvent_pair_scalar():
    sp = solvent_pair(validate_model([[0]], [-1], [1], 1))
    assert sp.lam_minus[0, 0] == pytest.approx(0, abs=1e-14)
    assert sp.lam_plus[0, 0] == pytest.approx(-2, abs=1e-14)
    assert sp.psi1_star[0, 0] == pytest.approx(-2, abs=1e-14)
    sp = solvent_pair(validate_model([[0]], [1], [1], 1))
    assert sp.lam_minus[0, 0] == pytest.approx(-2, abs=1e-14)
    assert sp.lam_plus[0, 0] == pytest.approx(0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 5))
def test_solvent_pair_properties(seed, m):
    model = random_model(np.random.default_rng(seed), m, min_drift=0.05)
    sp = solvent_pair(model)
    nq = np.abs(model.Q).max()
    for X in (sp.lam_minus, -sp.lam_plus):
        assert np.abs(quadratic_residual(X, model)).max() <= 1e-10 * nq
    for L in (sp.lam_minus, sp.lam_plus):
        off = L - np.diag(np.diag(L))
        assert off.min() >= -1e-10
        assert L.sum(axis=1).max() <= 1e-10
    conservative = sp.lam_minus if model.mean_drift < 0 else sp.lam_plus
    transient = sp.lam_plus if model.mean_drift < 0 else sp.lam_minus
    assert np.abs(conservative.sum(axis=1)).max() <= 1e-9
    assert transient.sum(axis=1).max() < -1e-6


def test_riccati_route_converges_to_solvent(m2):
    sp = solvent_pair(m2)
    dist = []
    for eps in (0.04, 0.02, 0.01):
        psi = solve_riccati_min_nonneg(build_fluid_approximation(m2, eps), "down")
        approx = (psi - np.eye(2)) / eps / m2.theta[:, None]
        dist.append(np.abs(approx - sp.lam_minus).max())
    assert all(d <= 5 * eps for d, eps in zip(dist, (0.04, 0.02, 0.01)))
    assert dist[2] < dist[1] < dist[0]


def test_psi_expansion_ratio(m2):
    sp = solvent_pair(m2)
    vals = []
    for eps in (0.08, 0.04, 0.02, 0.01):
        psi = solve_riccati_min_nonneg(build_fluid_approximation(m2, eps), "down")
        vals.append(np.abs(psi - np.eye(2) - eps * sp.psi1).max() / eps**2)
    r = np.array(vals[1:]) / np.array(vals[:-1])
    assert np.all((r >= 0.2) & (r <= 5))
