import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from lillab.errors import KindMismatchError, ValidationError
from lillab.models import (
    CtmcModel,
    OuModel,
    apply_semigroup,
    apply_semigroup_mc,
    ctmc_jumps,
    ctmc_transition,
    invariant_measure,
    load_model,
    ou_kernel_moments,
    sample_step,
)
from lillab.rng import aux_stream, path_stream
from lillab.space import Observable


def test_ou_kernel_moments_closed_form(ou):
    m = ou_kernel_moments(ou, 2.0, 0.5)
    assert m.mean == pytest.approx(2.0 * math.exp(-0.5), rel=1e-15)
    assert m.variance == pytest.approx(1.0 - math.exp(-1.0), rel=1e-14)


def test_ou_kernel_variance_small_t_relative_precision(ou):
    assert ou.kernel_var(1e-12) == pytest.approx(2e-12, rel=1e-9)


def test_ou_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        OuModel(gamma=0.0)
    with pytest.raises(ValidationError):
        OuModel(noise_sigma=-1.0)


def test_ctmc_generator_validation():
    with pytest.raises(ValidationError):
        CtmcModel(np.array([[-1.0, 1.0], [1.0, -0.5]]))
    with pytest.raises(ValidationError):
        CtmcModel(np.array([[1.0, -1.0], [1.0, -1.0]]))
    with pytest.raises(ValidationError):
        CtmcModel(np.array([[-1.0, np.nan], [1.0, -1.0]]))


def test_reducible_chain_has_no_unique_invariant_law():
    q = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(ValidationError):
        invariant_measure(CtmcModel(q))


def test_two_state_invariant(chain):
    np.testing.assert_allclose(invariant_measure(chain).probs, [0.5, 0.5], atol=1e-15)


def test_invariant_vector_annihilates_generator(three_state):
    pi = invariant_measure(three_state).probs
    assert np.max(np.abs(pi @ three_state.q_matrix)) < 1e-14


@pytest.mark.parametrize("t", [0.0, 0.01, 0.7, 5.0, 80.0])
def test_uniformization_matches_expm(three_state, t):
    p = ctmc_transition(three_state, t)
    np.testing.assert_allclose(p, scipy.linalg.expm(three_state.q_matrix * t), atol=1e-12)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-14)


def test_two_state_transition_closed_form(chain):
    t = 0.3
    p = ctmc_transition(chain, t)
    e = math.exp(-2 * t)
    np.testing.assert_allclose(p, [[(1 + e) / 2, (1 - e) / 2], [(1 - e) / 2, (1 + e) / 2]], atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_semigroup_property(s, t):
    q = np.array([[-1.0, 0.6, 0.4], [0.5, -1.2, 0.7], [0.3, 0.9, -1.2]])
    m = CtmcModel(q)
    np.testing.assert_allclose(ctmc_transition(m, s) @ ctmc_transition(m, t), ctmc_transition(m, s + t), atol=1e-12)


def test_apply_semigroup_ou_tanh_vs_mc(ou, ou_g):
    exact = apply_semigroup(ou, ou_g, 0.4, 1.3)
    est, se = apply_semigroup_mc(ou, ou_g, 0.4, 1.3, 200_000, aux_stream(1, "t"))
    assert abs(est - exact) < 4 * se


def test_apply_semigroup_ou_identity_like(ou):
    lin = Observable(lambda x: x, math.inf, 1.0)
    assert apply_semigroup(ou, lin, 1.0, 2.0) == pytest.approx(2 * math.exp(-1.0), rel=1e-12)


def test_apply_semigroup_kind_mismatch(chain, ou_g):
    with pytest.raises(KindMismatchError):
        apply_semigroup(chain, ou_g, 1.0, 0)


def test_ctmc_invariant_is_fixed_point(three_state):
    pi = invariant_measure(three_state).probs
    np.testing.assert_allclose(pi @ ctmc_transition(three_state, 2.5), pi, atol=1e-13)


def test_sample_step_ou_moments(ou):
    rng = aux_stream(3, "s")
    draws = np.array([sample_step(ou, 1.0, 0.5, rng) for _ in range(20000)])
    m = ou_kernel_moments(ou, 1.0, 0.5)
    assert abs(draws.mean() - m.mean) < 4 * math.sqrt(m.variance / len(draws))


def test_ctmc_jumps_distribution(chain):
    rng = path_stream(5, 0)
    ends = np.array([ctmc_jumps(chain, 0, 0.3, rng)[0] for _ in range(20000)])
    p = ctmc_transition(chain, 0.3)[0, 1]
    assert abs(ends.mean() - p) < 4 * math.sqrt(p * (1 - p) / len(ends))


def test_load_model_round_trip(three_state):
    m = load_model(three_state.to_json())
    np.testing.assert_array_equal(m.q_matrix, three_state.q_matrix)
    assert load_model({"kind": "ou", "gamma": 2.0, "sigma": 1.0}).gamma == 2.0
    with pytest.raises(ValidationError):
        load_model({"kind": "heat"})


def test_streams_are_reproducible_and_distinct():
    a = path_stream(11, 3).random(5)
    b = path_stream(11, 3).random(5)
    c = path_stream(11, 4).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
