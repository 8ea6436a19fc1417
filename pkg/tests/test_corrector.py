import math

import numpy as np
import pytest
from scipy.integrate import quad

from lillab.corrector import (
    OuCorrector,
    corrector_ctmc,
    corrector_ctmc_quadrature,
    corrector_lipschitz_bound,
    corrector_quadrature,
    poisson_residual,
    sigma_pairing,
)
from lillab.errors import KindMismatchError, ValidationError
from lillab.models import invariant_measure
from lillab.space import DiscreteMeasure, Observable, center_observable, gh_rule, tanh_observable


def test_two_state_poisson_solution(chain, chain_g):
    chi = corrector_ctmc(chain, chain_g)
    np.testing.assert_allclose(chi, [0.5, -0.5], atol=1e-15)
    assert poisson_residual(chain, chain_g, chi) < 1e-12
    assert sigma_pairing(chain_g, chi, invariant_measure(chain)) == 1.0


def test_uncentered_observable_is_rejected(chain):
    with pytest.raises(ValidationError):
        corrector_ctmc(chain, Observable.from_values([1.0, 0.0]))


def test_kind_mismatch(chain, ou_g):
    with pytest.raises(KindMismatchError):
        corrector_ctmc(chain, ou_g)


def test_three_state_matches_time_integral(three_state):
    g = center_observable(Observable.from_values([1.0, -2.0, 0.5], metric=three_state.metric),
                          invariant_measure(three_state))
    chi = corrector_ctmc(three_state, g)
    assert poisson_residual(three_state, g, chi) < 1e-12
    pi = invariant_measure(three_state).probs
    assert abs(pi @ chi) < 1e-13
    approx, tail = corrector_ctmc_quadrature(three_state, g, T=30.0, mesh=0.01)
    assert np.all(np.abs(approx - chi) <= tail + 1e-8)


def test_pairing_is_nonnegative_for_three_state(three_state):
    g = center_observable(Observable.from_values([0.3, -2.0, 1.5], metric=three_state.metric),
                          invariant_measure(three_state))
    chi = corrector_ctmc(three_state, g)
    assert sigma_pairing(g, chi, invariant_measure(three_state)) > 0


def test_corrupted_corrector_warns(chain, chain_g):
    with pytest.warns(RuntimeWarning):
        sigma_pairing(chain_g, -np.array([0.5, -0.5]), DiscreteMeasure([0.5, 0.5]))


def test_ou_linear_observable_closed_form(ou):
    lin = Observable(lambda x: x, 50.0, 1.0)
    est = corrector_quadrature(ou, lin, 1.5)
    assert abs(est.value - 1.5 / ou.gamma) <= est.tail_bound + est.quadrature_error + 1e-9


def test_ou_tail_bound_shrinks_with_truncation(ou, ou_g):
    short = corrector_quadrature(ou, ou_g, 0.8, T=5.0)
    long = corrector_quadrature(ou, ou_g, 0.8, T=30.0)
    assert long.tail_bound < short.tail_bound
    assert abs(short.value - long.value) <= short.tail_bound


def test_ou_uncentered_rejected(ou):
    with pytest.raises(ValidationError):
        corrector_quadrature(ou, Observable(lambda x: np.tanh(x) + 0.1, 1.1, 1.0), 0.0)


@pytest.fixture(scope="module")
def ou_chi():
    from lillab.models import OuModel

    return OuCorrector(OuModel(), tanh_observable(1.0))


def test_ou_corrector_satisfies_poisson_equation(ou_chi):
    # generator: L f = -gamma x f' + (sigma^2 / 2) f''
    x = np.linspace(-2.5, 2.5, 11)
    d1 = ou_chi._spline(x, 1)
    d2 = ou_chi._spline(x, 2)
    lhs = -1.0 * x * d1 + 1.0 * d2
    np.testing.assert_allclose(lhs, -np.tanh(x), atol=2e-3)


def test_ou_corrector_is_odd_and_lipschitz(ou_chi):
    x = np.linspace(-4, 4, 81)
    np.testing.assert_allclose(ou_chi(x), -ou_chi(-x), atol=1e-7)
    slope = np.max(np.abs(np.diff(ou_chi(x)) / np.diff(x)))
    assert slope <= corrector_lipschitz_bound(tanh_observable(1.0), 1.0) + 1e-9


def test_ou_corrector_out_of_table(ou_chi):
    far = ou_chi(np.array([20.0]))[0]
    direct = corrector_quadrature(ou_chi.model, ou_chi.g, 20.0)
    assert far == direct.value


def test_ou_pairing_matches_covariance_integral(ou_chi, ou):
    # sigma^2 = 2 int_0^inf E[g(X_0) g(X_t)] dt under the stationary law
    z, w = gh_rule(64)

    def cov(t):
        e = math.exp(-t)
        sd = math.sqrt(1.0 - e * e)
        inner = np.tanh(e * z[:, None] + sd * z[None, :]) @ w
        return float(np.tanh(z) * inner @ w)

    ref = 2.0 * quad(cov, 0.0, 60.0, limit=200)[0]
    got = sigma_pairing(ou_chi.g, ou_chi, invariant_measure(ou))
    assert got == pytest.approx(ref, abs=1e-6)


def test_table_export(ou_chi):
    t = ou_chi.to_table()
    assert len(t["x"]) == len(t["chi"])
    assert ou_chi.error_bound < 1e-5
