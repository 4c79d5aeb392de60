import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conslearn.errors import ConfigError, DimensionError
from conslearn.params import add_in_place, pair_update, weighted_delta


@pytest.mark.parametrize("local, received, gamma, expected", [
    ([1, 1], [1, 1], 0.5, [0, 0]),
    ([0, 2], [2, 4], 0.5, [1, 1]),
    ([0], [10], 0.3, [3]),
])
def test_weighted_delta_examples(local, received, gamma, expected):
    np.testing.assert_allclose(weighted_delta(local, received, gamma), expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("target, delta, sign, expected", [
    ([1, 2], [0, 0], 1, [1, 2]),
    ([0, 2], [1, 1], 1, [1, 3]),
    ([2, 4], [1, 1], -1, [1, 3]),
])
def test_add_in_place_examples(target, delta, sign, expected):
    t = np.array(target, dtype=float)
    out = add_in_place(t, delta, sign)
    assert out is t
    np.testing.assert_array_equal(t, expected)


@pytest.mark.parametrize("p_i, p_j, gamma, expected", [
    ([0], [2], 0.5, ([1], [1])),
    ([4], [0], 0.25, ([3], [1])),
    ([1, 1], [1, 1], 0.37, ([1, 1], [1, 1])),
])
def test_pair_update_examples(p_i, p_j, gamma, expected):
    a, b = pair_update(p_i, p_j, gamma)
    np.testing.assert_allclose(a, expected[0], atol=1e-12)
    np.testing.assert_allclose(b, expected[1], atol=1e-12)


def test_pair_update_leaves_inputs_alone():
    a, b = np.array([4.0]), np.array([0.0])
    pair_update(a, b, 0.25)
    assert a[0] == 4.0 and b[0] == 0.0


def test_errors():
    with pytest.raises(DimensionError):
        weighted_delta([1, 2], [1], 0.5)
    with pytest.raises(DimensionError):
        add_in_place(np.zeros(2), [1.0], 1)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            weighted_delta([1], [2], bad)
    with pytest.raises(ValueError):
        add_in_place(np.zeros(1), [1.0], 2)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
gammas = st.floats(1e-3, 1 - 1e-3)


@st.composite
def vector_pairs(draw):
    n = draw(st.integers(1, 30))
    a = draw(arrays(np.float64, n, elements=finite))
    b = draw(arrays(np.float64, n, elements=finite))
    return a, b


@given(vector_pairs(), gammas)
def test_sum_preserved(pair, gamma):
    p_i, p_j = pair
    a, b = pair_update(p_i, p_j, gamma)
    tol = 1e-9 * (1 + np.abs(p_i) + np.abs(p_j))
    assert np.all(np.abs((a + b) - (p_i + p_j)) <= tol)


@given(vector_pairs(), gammas)
def test_contraction_factor(pair, gamma):
    p_i, p_j = pair
    a, b = pair_update(p_i, p_j, gamma)
    before = np.linalg.norm(p_i - p_j)
    after = np.linalg.norm(a - b)
    expected = abs(1 - 2 * gamma) * before
    scale = np.linalg.norm(p_i) + np.linalg.norm(p_j)
    assert abs(after - expected) <= 1e-9 * max(expected, 1e-9 * scale, 1e-300) + 1e-12 * scale


@given(vector_pairs(), gammas)
def test_weighted_delta_antisymmetric(pair, gamma):
    a, b = pair
    np.testing.assert_array_equal(weighted_delta(a, b, gamma), -weighted_delta(b, a, gamma))


@settings(max_examples=50)
@given(vector_pairs(), gammas)
def test_length_and_finiteness_preserved(pair, gamma):
    a, b = pair
    for out in (weighted_delta(a, b, gamma), *pair_update(a, b, gamma)):
        assert out.shape == a.shape
        assert np.all(np.isfinite(out))
