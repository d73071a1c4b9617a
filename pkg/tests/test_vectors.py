import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from faceknn import InvalidArgumentError, l2, normalize, squared_l2

from .conftest import naive_squared_l2

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False, width=32)


def test_squared_l2_triangle():
    assert squared_l2([0, 0], [3, 4]) == 25.0
    assert l2([0, 0], [3, 4]) == 5.0


def test_identity_case():
    a = np.array([1.5, -2.0, 3.25])
    assert squared_l2(a, a) == 0.0
    assert l2(a, a) == 0.0


def test_random_pair_matches_loop(rng):
    a = rng.standard_normal(5)
    b = rng.standard_normal(5)
    expected = naive_squared_l2(a, b)
    assert squared_l2(a, b) == pytest.approx(expected, rel=1e-12)
    assert l2(a, b) == pytest.approx(np.sqrt(expected), rel=1e-12)


def test_float32_input_accumulates_in_double():
    a = np.full(1000, 0.1, dtype=np.float32)
    b = np.zeros(1000, dtype=np.float32)
    assert squared_l2(a, b) == naive_squared_l2(a, b)


@pytest.mark.parametrize("a,b", [([1, 2], [1, 2, 3]), ([], []), ([[1, 2]], [[1, 2]])])
def test_bad_shapes(a, b):
    with pytest.raises(InvalidArgumentError):
        squared_l2(a, b)


def test_non_finite_rejected():
    with pytest.raises(InvalidArgumentError):
        squared_l2([np.nan, 0], [0, 0])


def test_normalize():
    np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-12)
    u = np.array([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(normalize(u), u)
    with pytest.raises(InvalidArgumentError):
        normalize([0.0, 0.0])


@given(arrays(np.float32, 6, elements=finite), arrays(np.float32, 6, elements=finite))
def test_symmetry_and_non_negativity(a, b):
    d = squared_l2(a, b)
    assert d == squared_l2(b, a)
    assert d >= 0
    assert (d == 0) == np.array_equal(a, b)


@given(arrays(np.float32, 4, elements=finite), arrays(np.float32, 4, elements=finite),
       arrays(np.float32, 4, elements=finite))
def test_monotone_agreement(a, b, c):
    assert (squared_l2(a, b) < squared_l2(a, c)) == (l2(a, b) < l2(a, c))


@given(arrays(np.float64, 5, elements=st.floats(-1e3, 1e3)).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_normalize_idempotent(a):
    once = normalize(a)
    assert abs(np.linalg.norm(once) - 1) < 1e-9
    np.testing.assert_allclose(normalize(once), once, atol=1e-9)
