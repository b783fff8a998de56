import numpy as np
import pytest

from reflected_mmbm.errors import NegativeRate
from reflected_mmbm.fluid import first_passage_set
from reflected_mmbm.limit import limit_matrices, stationary_density
from reflected_mmbm.model import build_fluid_approximation, validate_model
from reflected_mmbm.validation import (UnsortedEpsList, discretization_oracle, expansion_check,
                                       lambda_sweep, loglog_slope)

EPS = [0.2, 0.1, 0.05, 0.025]


def test_oracle_m1_second_order(m1):
    xs, dens = discretization_oracle(m1, 2000)
    exact = 2 * np.exp(-2 * xs) / (1 - np.exp(-2))
    assert np.abs(dens[:, 0] - exact).max() <= 5e-6


def test_oracle_error_is_second_order(m1):
    errs = []
    for n in (250, 500):
        xs, dens = discretization_oracle(m1, n)
        errs.append(np.abs(dens[:, 0] - 2 * np.exp(-2 * xs) / (1 - np.exp(-2))).max())
    assert 0.15 <= errs[1] / errs[0] <= 0.35


def test_oracle_tiny_drift_near_uniform():
    model = validate_model([[0.0]], [-1e-3], [1.0], 1.0)
    _, dens = discretization_oracle(model, 500)
    assert np.abs(dens - 1.0).max() <= 2e-3


def test_oracle_mass_and_m2(m2):
    xs, dens = discretization_oracle(m2, 2000)
    h = xs[1] - xs[0]
    assert dens.sum() * h == pytest.approx(1.0, abs=1e-12)
    ref = stationary_density(m2).density_grid(xs)
    assert np.abs(dens - ref).max() <= 1e-4


def test_oracle_negative_rate():
    model = validate_model([[0.0]], [-200.0], [1.0], 1.0)
    with pytest.raises(NegativeRate):
        discretization_oracle(model, 50)


def test_loglog_slope_exact():
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    assert loglog_slope(eps, 3 * eps ** 1.5) == pytest.approx(1.5, abs=1e-12)
    assert loglog_slope(eps, np.zeros(4)) is None


@pytest.mark.parametrize("make", ["m1", "m2"])
def test_lambda_sweep_first_order(make, request):
    model = request.getfixturevalue(make)
    rep = lambda_sweep(model, EPS)
    assert rep.eps == EPS
    assert 0.7 <= rep.slope <= 1.3
    assert rep.monotone(0.1)
    d = np.array(rep.distances)
    assert np.all(d > 0)
    for key in ("mass0", "massb"):
        v = np.array([getattr(p, key) for p in rep.points])
        r = v[1:] / v[:-1]
        assert np.all((r >= 0.3) & (r <= 0.7)), (key, r)
    # K_eps drifts from K0 by at most C eps (faster for the scalar model)
    kd = np.array([p.k_drift for p in rep.points]) / np.array(EPS)
    assert np.all(kd[1:] <= 1.25 * kd[:-1])
    doc = rep.to_dict()
    assert doc["slope"] == rep.slope and len(doc["points"]) == 4


def test_sweep_sorts_with_warning(m1):
    with pytest.warns(UnsortedEpsList):
        rep = lambda_sweep(m1, [0.05, 0.1], n_grid=50)
    assert rep.eps == [0.1, 0.05]


@pytest.mark.parametrize("make", ["m1", "m2"])
def test_expansion_check_in_band(make, request):
    model = request.getfixturevalue(make)
    out = expansion_check(model, EPS)
    assert all(out["ok"].values()), out["ratios"]


def test_expansion_check_random(random_models):
    for model in random_models[:5]:
        out = expansion_check(model, [0.1, 0.05, 0.025, 0.0125])
        assert all(out["ok"].values()), out["ratios"]


def test_expansion_check_m1_psi(m1):
    out = expansion_check(m1, EPS)
    # Psi1 = 0 for this model; the eps^2 coefficient stays bounded
    assert max(out["scaled"]["Psi"]) < 10


def test_expansion_check_needs_three(m1):
    with pytest.raises(ValueError):
        expansion_check(m1, [0.1, 0.05])


def test_printed_first_order_U_term_is_not_second_order(m2):
    # U_eps - Lambda- - eps (Theta^-1 Q + V^-1 D Psi1) is only O(eps): the
    # eps^2-scaled residual roughly doubles per halving instead of staying
    # bounded, so the expansion check uses first order for U.
    lm = limit_matrices(m2)
    sp = lm.solvents
    thi = np.diag(1 / m2.theta)
    VD = np.diag(m2.mu / m2.sigma2)
    scaled = []
    for eps in EPS[1:]:
        U = first_passage_set(build_fluid_approximation(m2, eps)).U
        res = U - sp.lam_minus - eps * (thi @ m2.Q + VD @ sp.psi1)
        scaled.append(np.abs(res).sum(axis=1).max() / eps ** 2)
    r = np.array(scaled[1:]) / np.array(scaled[:-1])
    assert np.all(r > 1.6)
