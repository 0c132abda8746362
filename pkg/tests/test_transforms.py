import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmaccess.transforms import fwht, hadamard, pointwise_conj_mul, shift_by_unit

from oracles import sylvester


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def complex_vectors(min_m=1, max_m=7):
    return st.integers(min_m, max_m).flatmap(
        lambda m: st.tuples(arrays(np.float64, 1 << m, elements=finite),
                            arrays(np.float64, 1 << m, elements=finite))
    ).map(lambda t: t[0] + 1j * t[1])


def test_examples():
    assert fwht([1, 1, 1, 1]).tolist() == [4, 0, 0, 0]
    assert fwht([1, -1, 1, -1]).tolist() == [0, 4, 0, 0]


@pytest.mark.parametrize("m", range(0, 7))
def test_hadamard_recursion_matches_popcount_form(m):
    assert np.array_equal(hadamard(m), sylvester(m))


@pytest.mark.parametrize("m", range(1, 7))
def test_matches_direct_multiply(m):
    rng = np.random.default_rng(m)
    H = sylvester(m)
    for _ in range(100):
        v = rng.standard_normal(1 << m) + 1j * rng.standard_normal(1 << m)
        assert np.max(np.abs(fwht(v) - H @ v)) <= 1e-12 * max(1.0, np.max(np.abs(H @ v)))


def test_batch_and_inplace():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((3, 16)) + 0j
    expect = np.array([fwht(v) for v in V])
    out = fwht(V.copy(), inplace=True)
    assert np.allclose(out, expect, atol=1e-12)
    W = V.copy()
    assert fwht(W, inplace=True) is W
    with pytest.raises(ValueError):
        fwht(np.zeros((16, 4))[:, 0], inplace=True)


def test_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        fwht(np.ones(6))
    with pytest.raises(ValueError):
        shift_by_unit(np.ones(12), 1)


@settings(max_examples=100, deadline=None)
@given(complex_vectors())
def test_parseval_and_involution(v):
    n = v.size
    Y = fwht(v)
    scale = max(1.0, float(np.sum(np.abs(v) ** 2)))
    assert abs(np.sum(np.abs(Y) ** 2) - n * np.sum(np.abs(v) ** 2)) <= 1e-9 * n * scale
    assert np.allclose(fwht(Y), n * v, atol=1e-9 * n * np.sqrt(scale))


@settings(max_examples=100, deadline=None)
@given(complex_vectors(), st.data())
def test_shift_theorem(v, data):
    m = v.size.bit_length() - 1
    j = data.draw(st.integers(1, m))
    sign = np.where((np.arange(v.size) >> (j - 1)) & 1, -1.0, 1.0)
    scale = max(1.0, float(np.max(np.abs(v)))) * v.size
    assert np.allclose(fwht(shift_by_unit(v, j)), sign * fwht(v), atol=1e-9 * scale)


def test_shift_examples():
    a, b, c, d = "abcd"
    assert shift_by_unit(np.array([a, b, c, d]), 1).tolist() == [b, a, d, c]
    v = np.arange(1, 17)
    expect = np.r_[5:9, 1:5, 13:17, 9:13]
    assert shift_by_unit(v, 3).tolist() == expect.tolist()
    for j in range(1, 5):
        assert np.array_equal(shift_by_unit(shift_by_unit(v, j), j), v)
        x = np.arange(16)
        assert np.array_equal(shift_by_unit(v, j), v[x ^ (1 << (j - 1))])
    with pytest.raises(ValueError):
        shift_by_unit(v, 0)
    with pytest.raises(ValueError):
        shift_by_unit(v, 5)


def test_pointwise_conj_mul():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    assert np.allclose(pointwise_conj_mul(v, v), np.abs(v) ** 2)
    assert np.array_equal(pointwise_conj_mul(v, np.ones(8)), v)
    with pytest.raises(ValueError):
        pointwise_conj_mul(v, v[:4])
