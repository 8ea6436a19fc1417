import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from oracles import brute_force_ot, random_metric, random_prob

from lillab.errors import ValidationError
from lillab.models import OuModel
from lillab.space import EmpiricalMeasure, GaussianMeasure, LyapunovConfig, Metric, Observable, tanh_observable
from lillab.transport import (
    certify_contraction,
    certify_ergodicity,
    certify_moments,
    cesaro_convergence,
    estimate_contraction_rate,
    lipschitz_propagation_check,
    lyapunov_check,
    sinkhorn_w1,
    transport_plan,
    w1_discrete,
    w1_empirical_1d,
)


def test_exact_solver_matches_enumeration_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        rho = random_metric(rng, n)
        mu, nu = random_prob(rng, n), random_prob(rng, n)
        got = w1_discrete(mu, nu, Metric.explicit(rho))
        want = brute_force_ot(mu, nu, rho)
        assert abs(got - want) <= 1e-10


def test_plan_has_correct_marginals():
    rng = np.random.default_rng(7)
    rho = random_metric(rng, 6)
    mu, nu = random_prob(rng, 6), random_prob(rng, 6)
    cost, plan = transport_plan(mu, nu, Metric.explicit(rho))
    np.testing.assert_allclose(plan.sum(axis=1), mu, atol=1e-12)
    np.testing.assert_allclose(plan.sum(axis=0), nu, atol=1e-12)
    assert np.all(plan >= -1e-15)
    assert cost == pytest.approx(float(np.sum(plan * rho)))


def test_discrete_w1_on_line_agrees_with_scipy():
    rng = np.random.default_rng(3)
    pos = np.array([0.0, 0.5, 1.7, 2.0, 4.1])
    rho = np.abs(pos[:, None] - pos[None, :])
    for _ in range(30):
        mu, nu = random_prob(rng, 5), random_prob(rng, 5)
        want = wasserstein_distance(pos, pos, mu, nu)
        assert w1_discrete(mu, nu, Metric.explicit(rho)) == pytest.approx(want, abs=1e-12)


def test_w1_discrete_identity_and_symmetry():
    rng = np.random.default_rng(9)
    rho = random_metric(rng, 4)
    m = Metric.explicit(rho)
    for _ in range(20):
        mu, nu, la = random_prob(rng, 4), random_prob(rng, 4), random_prob(rng, 4)
        assert w1_discrete(mu, mu, m) == pytest.approx(0.0, abs=1e-14)
        assert w1_discrete(mu, nu, m) == pytest.approx(w1_discrete(nu, mu, m), abs=1e-12)
        assert w1_discrete(mu, nu, m) <= w1_discrete(mu, la, m) + w1_discrete(la, nu, m) + 1e-12


def test_w1_discrete_validation():
    m = Metric.uniform(2)
    with pytest.raises(ValidationError):
        w1_discrete([0.6, 0.6], [0.5, 0.5], m)
    with pytest.raises(ValidationError):
        w1_discrete([0.5, 0.5, 0.0], [0.5, 0.5], m)


def test_w1_empirical_hand_example():
    assert w1_empirical_1d([0.0, 1.0], [2.0, 3.0]) == 2.0


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=30),
    st.lists(st.floats(-100, 100), min_size=1, max_size=30),
)
def test_w1_empirical_agrees_with_scipy(a, b):
    assert w1_empirical_1d(a, b) == pytest.approx(wasserstein_distance(a, b), rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=1, max_size=12),
    st.lists(st.floats(0.01, 5), min_size=12, max_size=12),
    st.lists(st.floats(-10, 10), min_size=1, max_size=12),
    st.lists(st.floats(0.01, 5), min_size=12, max_size=12),
)
def test_weighted_w1_agrees_with_scipy(a, wa, b, wb):
    wa, wb = wa[: len(a)], wb[: len(b)]
    want = wasserstein_distance(a, b, wa, wb)
    assert w1_empirical_1d(a, b, wa, wb) == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_sinkhorn_dual_is_a_lower_bound():
    rng = np.random.default_rng(4)
    rho = random_metric(rng, 5)
    mu, nu = random_prob(rng, 5), random_prob(rng, 5)
    exact = w1_discrete(mu, nu, Metric.explicit(rho))
    res = sinkhorn_w1(mu, nu, Metric.explicit(rho), reg=0.05)
    assert res.dual_value <= exact + 1e-9
    assert res.duality_gap >= 0


# ------------------------------------------------------------- certificates


def test_ou_contraction_ratios_are_one():
    xs = np.linspace(-3, 3, 10)
    ys = np.linspace(-2.7, 3.3, 10)
    ts = np.linspace(0.0, 4.5, 10)
    cert = certify_contraction(OuModel(), xs, ys, ts)
    assert cert.passed
    ratios = np.array([r["ratio"] for r in cert.grid])
    assert np.max(np.abs(ratios - 1.0)) <= 1e-12


def test_ou_sampled_contraction_route():
    cert = certify_contraction(OuModel(), [0.0, 2.0], [1.0, -1.0], [0.5, 1.0], n_kernel_samples=20000, seed=3)
    assert cert.passed
    assert cert.method != "analytic"


def test_ctmc_contraction_slope_is_spectral_gap(chain):
    cert = certify_contraction(chain, [0, 1], [0, 1], np.linspace(0.1, 3.0, 10))
    assert cert.passed
    assert cert.gamma_hat == pytest.approx(2.0, rel=1e-6)
    assert cert.fit_r2 > 0.999


def test_contraction_detects_overstated_rate(chain):
    cert = certify_contraction(chain, [0, 1], [0, 1], np.linspace(0.1, 3.0, 10), gamma=3.0)
    assert not cert.passed


def test_contraction_with_measure_pairs():
    pairs = [(EmpiricalMeasure.uniform([0.0, 2.0]), EmpiricalMeasure.dirac(-1.0))]
    cert = certify_contraction(OuModel(), [0.0], [1.0], [0.5, 1.0, 2.0], measure_pairs=pairs,
                               cfg=LyapunovConfig(0.0, 3.0))
    assert cert.passed and cert.measure_checks


def test_estimated_rate_for_three_state(three_state):
    gamma = estimate_contraction_rate(three_state)
    assert gamma > 0


def test_ou_ergodicity_slope():
    rep = certify_ergodicity(OuModel(), EmpiricalMeasure.dirac(3.0), np.linspace(0.25, 4.0, 16), seed=1)
    assert abs(rep.fitted_slope + 1.0) <= 0.1
    assert rep.bound_holds


def test_ctmc_ergodicity_slope(chain):
    rep = certify_ergodicity(chain, EmpiricalMeasure.dirac(0, "discrete"), np.linspace(0.25, 6, 24))
    assert rep.fitted_slope == pytest.approx(-2.0, rel=1e-6)
    assert rep.fitted_C == pytest.approx(0.5, rel=1e-6)
    assert rep.bound_holds


def test_moments_from_dirac_are_bounded():
    cfg = LyapunovConfig(0.0, 3.0)
    rep = certify_moments(OuModel(), EmpiricalMeasure.dirac(4.0), cfg, np.linspace(0, 5, 11))
    assert rep.non_increasing_after_burn_in
    assert rep.max_value == pytest.approx(64.0, rel=1e-9)


def test_moments_quadrature_vs_monte_carlo():
    cfg = LyapunovConfig(0.0, 3.0)
    mu = GaussianMeasure(1.0, 0.5)
    q = certify_moments(OuModel(), mu, cfg, [0.0, 0.5, 2.0])
    mc = certify_moments(OuModel(), mu, cfg, [0.0, 0.5, 2.0], samples_per_t=200_000, seed=2)
    for v, w, s in zip(q.values, mc.values, mc.stderr):
        assert abs(v - w) < 4 * s


def test_lyapunov_drift_constants():
    assert lyapunov_check(OuModel(), 3.0, np.linspace(-5, 5, 21), [0.0, 0.5, 1.0, 3.0])["holds"]


def test_cesaro_averages_shrink(chain):
    rep = cesaro_convergence(chain, EmpiricalMeasure.dirac(0, "discrete"), Observable.from_values([1.0, 0.0]), 20.0)
    assert rep.shrinking
    assert rep.gaps[-1] < 0.02


def test_cesaro_ou():
    rep = cesaro_convergence(OuModel(), EmpiricalMeasure.dirac(2.0), tanh_observable(), 20.0)
    assert rep.shrinking and rep.target == pytest.approx(0.0, abs=1e-12)


def test_lipschitz_propagation_ou():
    f = lambda a, b: np.tanh(a) + 0.5 * np.sin(b)  # noqa: E731
    rep = lipschitz_propagation_check(OuModel(), f, 1.0, 0.5, 0.3, 1.1, np.linspace(-3, 3, 25))
    assert rep.passed


def test_lipschitz_propagation_chain(three_state):
    g = estimate_contraction_rate(three_state)
    f = lambda a, b: (a == 0).astype(float) - 0.5 * (b == 2)  # noqa: E731
    # Lip of the indicator w.r.t. the explicit metric is 1 / min distance
    rep = lipschitz_propagation_check(three_state, f, 1.0, 0.5, 0.5, 1.5, [0, 1, 2], gamma=g)
    assert rep.passed
