import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxot.core import (
    DimensionMismatch,
    NegativeMass,
    NonFinite,
    PointCloud,
    ShapeMismatch,
    SolveTrace,
    UnsupportedReference,
    ZeroTotalMass,
    bregman_div,
    cost_matrix,
    entropy,
    histogram_from_weights,
    marginal_violation,
    round_to_feasible,
    transport_cost,
)

pos_vec = arrays(np.float64, st.integers(1, 8), elements=st.floats(0.01, 10.0))


# --- histograms --------------------------------------------------------------


def test_histogram_examples():
    np.testing.assert_array_equal(histogram_from_weights([2, 2]), [0.5, 0.5])
    np.testing.assert_array_equal(histogram_from_weights([1, 0, 3]), [0.25, 0, 0.75])
    with pytest.raises(NegativeMass):
        histogram_from_weights([-1, 2])
    with pytest.raises(ZeroTotalMass):
        histogram_from_weights([0, 0])
    with pytest.raises(NonFinite):
        histogram_from_weights([1, np.nan])


def test_histogram_is_read_only():
    h = histogram_from_weights([1, 3])
    with pytest.raises(ValueError):
        h[0] = 1


@given(pos_vec)
def test_histogram_idempotent(w):
    h = histogram_from_weights(w)
    assert abs(h.sum() - 1) <= 1e-12
    np.testing.assert_array_equal(histogram_from_weights(h), h)


def test_point_cloud():
    X = PointCloud([[0, 0], [1, 1]])
    assert X.n == 2 and X.dim == 2
    np.testing.assert_array_equal(X.weights, [0.5, 0.5])
    with pytest.raises(ShapeMismatch):
        PointCloud([[0.0], [1.0]], [1.0])


# --- costs -------------------------------------------------------------------


def test_cost_examples():
    np.testing.assert_array_equal(cost_matrix([[0.0]], [[3.0]]), [[9]])
    np.testing.assert_array_equal(cost_matrix([0.0, 1.0], [0.0, 1.0]), [[0, 1], [1, 0]])
    assert cost_matrix([[0.0, 0.0]], [[3.0, 4.0]], p=1)[0, 0] == pytest.approx(5.0, abs=1e-14)
    with pytest.raises(DimensionMismatch):
        cost_matrix([[0.0, 0.0]], [[1.0]])


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 3)), elements=st.floats(-10, 10)),
       st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_cost_self_symmetric_zero_diagonal(X, p):
    C = cost_matrix(X, X, p)
    np.testing.assert_array_equal(np.diag(C), 0)
    np.testing.assert_array_equal(C, C.T)


# --- functionals -------------------------------------------------------------


def test_entropy_examples():
    assert entropy([[1.0]]) == 0
    assert entropy(np.full((2, 2), 0.25)) == pytest.approx(-math.log(4), abs=1e-12)
    assert entropy([[0.5, 0], [0, 0.5]]) == pytest.approx(-math.log(2), abs=1e-12)


def test_bregman_examples():
    P = np.array([[0.2, 0.3], [0.1, 0.4]])
    assert bregman_div(P, P) == 0
    assert bregman_div([[1.0]], [[math.e]]) == pytest.approx(math.e - 2, abs=1e-12)
    # frozen from 0.6 ln 1.2 + 0.4 ln 0.8 evaluated independently
    assert bregman_div([[0.6, 0.4]], [[0.5, 0.5]]) == pytest.approx(0.020135513550688863, abs=1e-12)
    with pytest.raises(UnsupportedReference):
        bregman_div([[0.5, 0.5]], [[1.0, 0.0]])


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_bregman_nonnegative(seed):
    rng = np.random.default_rng(seed)
    P, R = rng.random((3, 4)), rng.random((3, 4)) + 1e-3
    d = bregman_div(P, R)
    assert d >= -1e-12
    assert bregman_div(P, P) == pytest.approx(0, abs=1e-15)
    if not np.allclose(P, R):
        assert d > 0


def test_transport_cost_examples():
    swap = np.array([[0, 1], [1, 0.0]])
    assert transport_cost([[1.0]], [[9.0]]) == 9
    assert transport_cost(np.eye(2) / 2, swap) == 0
    assert transport_cost(np.full((2, 2), 0.25), swap) == 0.5
    with pytest.raises(ShapeMismatch):
        transport_cost(np.eye(2), np.eye(3))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_transport_cost_bilinear(a, b, seed):
    rng = np.random.default_rng(seed)
    P1, P2, C = rng.random((3, 4)), rng.random((3, 4)), rng.random((3, 4))
    lhs = transport_cost(a * P1 + b * P2, C)
    assert lhs == pytest.approx(a * transport_cost(P1, C) + b * transport_cost(P2, C), abs=1e-12)


def test_marginal_violation_examples():
    u = np.array([0.5, 0.5])
    assert marginal_violation(np.eye(2) / 2, u, u) == 0
    assert marginal_violation([[0.5, 0], [0, 0.5]], [0.6, 0.4], u) == pytest.approx(0.2, abs=1e-15)
    assert marginal_violation(np.zeros((2, 2)), u, u) == 2


# --- rounding ----------------------------------------------------------------


def test_round_examples():
    u = np.array([0.5, 0.5])
    P = np.array([[0.3, 0.2], [0.2, 0.3]])
    np.testing.assert_array_equal(round_to_feasible(P, u, u), P)
    np.testing.assert_allclose(round_to_feasible([[0.6, 0], [0, 0.6]], u, u), [[0.5, 0], [0, 0.5]], atol=1e-15)
    with pytest.raises(ZeroTotalMass):
        round_to_feasible(np.zeros((2, 2)), u, u)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_round_feasible_and_cost_bounded(seed, m, n):
    rng = np.random.default_rng(seed)
    mu = histogram_from_weights(rng.random(m) + 0.05)
    nu = histogram_from_weights(rng.random(n) + 0.05)
    P = np.outer(mu, nu) * rng.uniform(0.9, 1.1, (m, n))
    C = rng.random((m, n))
    R = round_to_feasible(P, mu, nu)
    assert np.all(R >= 0)
    assert marginal_violation(R, mu, nu) <= 1e-12
    assert abs(transport_cost(R, C) - transport_cost(P, C)) <= C.max() * marginal_violation(P, mu, nu) + 1e-12


# --- traces ------------------------------------------------------------------


def test_trace_strictly_increasing():
    tr = SolveTrace()
    tr.append(1, 1.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        tr.append(1, 1.0, 0.1, 0.0)
    tr.close(1, 2.0, 0.0, 0.1)
    assert len(tr) == 1 and tr.cost == [2.0]
    tr.close(3, 1.5, 0.0, 0.2)
    assert tr.iteration == [1, 3]
