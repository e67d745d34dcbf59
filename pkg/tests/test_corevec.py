import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from localadam.corevec import DiagPrecond, as_vector, ordered_sum, weighted_norm_sq, worker_mean

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_weighted_norm_examples():
    assert weighted_norm_sq([1.0, 2.0], DiagPrecond.identity(2)) == 5.0
    assert weighted_norm_sq([2.0, 0.0], DiagPrecond(np.array([4.0, 9.0])), inverse=True) == 1.0
    H = DiagPrecond(np.array([0.3, 7.0, 2.0]))
    assert weighted_norm_sq(np.zeros(3), H) == 0.0
    assert weighted_norm_sq(np.zeros(3), H, inverse=True) == 0.0


def test_weighted_norm_errors():
    with pytest.raises(ValueError):
        weighted_norm_sq([1.0, 2.0, 3.0], DiagPrecond.identity(2))
    with pytest.raises(ValueError):
        DiagPrecond(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        DiagPrecond(np.array([1.0, -2.0]))


@given(arrays(np.float64, st.integers(1, 12), elements=finite))
def test_identity_norm_is_sum_of_squares(x):
    H = DiagPrecond.identity(x.size)
    expected = float(np.sum(x * x))
    assert weighted_norm_sq(x, H) == expected
    assert weighted_norm_sq(x, H, inverse=True) == expected
    assert weighted_norm_sq(-x, H) == expected


def test_from_second_moment_floor():
    H = DiagPrecond.from_second_moment(np.array([0.0, 3.0, 1e-12]), lam=0.5)
    assert np.all(H.diag >= 0.5)
    assert H.diag[1] == pytest.approx(np.sqrt(3.25))


def test_worker_mean_examples():
    np.testing.assert_array_equal(worker_mean([[1, 1], [3, 3]]), [2.0, 2.0])
    np.testing.assert_array_equal(worker_mean([[0.25, -4.0]]), [0.25, -4.0])
    np.testing.assert_allclose(worker_mean([[1, 0], [0, 1], [2, 2]]), [1.0, 1.0], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        worker_mean([])


@settings(max_examples=50)
@given(st.integers(1, 9), st.integers(1, 6), st.randoms(use_true_random=False))
def test_worker_mean_permutation(M, d, rnd):
    rng = np.random.default_rng(rnd.randint(0, 2**31))
    vs = list(rng.normal(size=(M, d)) * 10)
    base = worker_mean(vs)
    perm = list(vs)
    rnd.shuffle(perm)
    scale = np.max(np.abs(vs), axis=0)
    assert np.all(np.abs(worker_mean(perm) - base) <= 4 * M * np.finfo(float).eps * scale)
    np.testing.assert_array_equal(worker_mean(vs), base)


def test_ordered_sum_matches_left_fold():
    rng = np.random.default_rng(0)
    stack = rng.normal(size=(7, 5)) * np.array([1e16, 1, 1, -1e16, 3])
    acc = np.zeros(5)
    for row in stack:
        acc = acc + row
    np.testing.assert_array_equal(ordered_sum(stack), acc)


def test_as_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vector([1.0, 2.0], dim=3)
