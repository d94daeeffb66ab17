import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adacgp.baselines import AdaptiveVar, AdaptiveVarState, update_adaptive_var, var_causality_to_gso
from adacgp.cgp import FilterCoeffs, generate_filter_coeffs, simulate_cgp
from adacgp.graphs import ParameterError, generate_gso
from adacgp.metrics import classify_edges


def test_zero_stream_keeps_coefficients_zero():
    state = AdaptiveVarState.zeros(3, 2, sparsity_weight=0.1)
    for _ in range(10):
        update_adaptive_var(state, np.zeros(3), np.zeros(6), step=0.1)
    assert not np.any(state.coeffs)


@pytest.mark.parametrize("mode", ["lms", "rls"])
def test_scalar_ar1_converges_to_least_squares(mode):
    s = simulate_cgp(np.array([[0.6]]), FilterCoeffs(1, [0.0, 1.0]), T=5000, burn_in=100, seed=3)
    x = s.samples[:, 0]
    ls = (x[1:] @ x[:-1]) / (x[:-1] @ x[:-1])
    est = AdaptiveVar(1, P=1, sparsity_weight=0.0, lam=1.0 if mode == "rls" else 0.99, mode=mode,
                      step_size=None if mode == "rls" else 0.002)
    path = []
    for v in s.samples:
        est.step(v)
        path.append(est.state.coeffs[0, 0])
    # LMS jitters around the solution; compare its time average
    assert np.mean(path[-2000:]) == pytest.approx(ls, rel=0.05)


def test_step_must_be_positive():
    with pytest.raises(ParameterError):
        update_adaptive_var(AdaptiveVarState.zeros(2, 1), np.ones(2), np.ones(2), step=0.0)
    with pytest.raises(ParameterError):
        AdaptiveVarState.zeros(2, 1, mode="newton")


def test_group_soft_threshold_removes_small_groups():
    state = AdaptiveVarState.zeros(2, 2, sparsity_weight=1.0)
    state.coeffs[:] = [[0.1, 3.0, 0.1, 4.0], [0.0, 0.0, 0.0, 0.0]]
    update_adaptive_var(state, np.zeros(2), np.zeros(4), step=0.5)
    # group (0,0) has norm ~0.14 < 0.5 -> zero; group (0,1) norm 5 -> scaled by 0.9
    np.testing.assert_allclose(state.coeffs[0], [0.0, 2.7, 0.0, 3.6])


def test_causality_mapping_examples():
    assert not np.any(var_causality_to_gso(np.zeros((2, 6)), 3).weights)
    c = np.zeros((2, 4))
    c[0, 2 + 1] = -0.7  # lag 2, edge (0, 1)
    W = var_causality_to_gso(c, 2).weights
    assert W[0, 1] == pytest.approx(0.7) and np.count_nonzero(W) == 1
    c = np.zeros((1, 3))
    c[0] = [1.0, 2.0, 2.0]
    assert var_causality_to_gso(c, 3).weights[0, 0] == pytest.approx(3.0)


def test_causality_tolerance():
    c = np.array([[0.05, 0.2]])
    assert var_causality_to_gso(c, 2, tol=0.1).weights[0, 0] == pytest.approx(np.hypot(0.05, 0.2))
    assert var_causality_to_gso(c, 2, tol=0.3).weights[0, 0] == 0.0


@given(arrays(float, (3, 6), elements=st.floats(-2, 2)))
def test_mapping_non_negative_and_monotone(c):
    W = var_causality_to_gso(c, 2).weights
    assert W.min() >= 0
    bigger = c * 1.5
    assert np.all(var_causality_to_gso(bigger, 2).weights >= W - 1e-12)


def test_dense_support_on_random_graph():
    W = generate_gso("random", 12, 0)
    s = simulate_cgp(W, generate_filter_coeffs(3, 0), T=2000, burn_in=100, seed=1)
    est = AdaptiveVar(12, 3)
    for x in s.samples:
        est.step(x)
    assert classify_edges(W, est.W).p_false_alarm > 0.9
