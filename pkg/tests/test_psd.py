import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdscore.errors import NonConvergence, NotSymmetric, ShapeMismatch, ValidationError
from cdscore.psd import (
    PsdProjectionOptions,
    _prox_max_norm,
    max_norm_distance,
    nearest_psd,
    project_psd_cone,
)
from oracles import psd_distance_2x2, psd_distance_small

TIGHT = PsdProjectionOptions(tol_primal=1e-9, tol_dual=1e-9, max_iters=20_000)


def _random_sym(rng, n, scale=1.0):
    a = rng.normal(scale=scale, size=(n, n))
    return (a + a.T) / 2


def test_oracle_2x2_closed_form():
    # K = [[0, 1], [1, 0]]: raise diagonals by d and shrink off-diagonal by d,
    # feasible once (1 - d)^2 <= d^2, i.e. d = 1/2
    assert psd_distance_2x2(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(0.5, abs=1e-10)
    assert psd_distance_2x2(np.array([[-1.0, 0.0], [0.0, 2.0]])) == pytest.approx(1.0, abs=1e-10)


def test_identity_and_diagonal_cases():
    np.testing.assert_array_equal(nearest_psd(np.eye(4)), np.eye(4))
    out = nearest_psd(np.diag([1.0, -0.5]), TIGHT, info=True)
    assert out.distance == pytest.approx(0.5, abs=1e-6)
    assert np.linalg.eigvalsh(out.matrix)[0] >= -1e-8


@pytest.mark.parametrize("n", [2, 3])
def test_matches_brute_force(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(12):
        k = _random_sym(rng, n)
        res = nearest_psd(k, TIGHT, info=True)
        assert abs(res.distance - psd_distance_small(k)) < 1e-3
        assert np.linalg.eigvalsh(res.matrix)[0] >= -1e-8


def test_idempotent_on_psd_input():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 3))
    k = a @ a.T + 0.1 * np.eye(6)
    res = nearest_psd(k, info=True)
    assert res.short_circuit and res.iterations == 0 and res.distance == 0.0
    np.testing.assert_array_equal(res.matrix, k)
    np.testing.assert_array_equal(nearest_psd(res.matrix), res.matrix)


def test_projection_output_is_a_fixed_point():
    k = _random_sym(np.random.default_rng(2), 5)
    b = nearest_psd(k, TIGHT)
    again = nearest_psd(b + 0.0, PsdProjectionOptions(eig_floor=1e-7))
    assert max_norm_distance(again, b) < 1e-6


def test_corrected_gram_case():
    # a rank-deficient Gram matrix with a small diagonal correction
    rng = np.random.default_rng(3)
    x = rng.normal(size=(10, 30))
    k = x.T @ x / 10 - np.diag([0.05] + [0.0] * 29)
    res = nearest_psd(k, info=True)
    assert not res.short_circuit
    assert 0 < res.distance <= 0.05 + 1e-6
    assert np.linalg.eigvalsh(res.matrix)[0] >= -1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(2, 6))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    k = _random_sym(rng, n)
    perm = rng.permutation(n)
    d1 = nearest_psd(k, TIGHT, info=True).distance
    d2 = nearest_psd(k[np.ix_(perm, perm)], TIGHT, info=True).distance
    assert d1 == pytest.approx(d2, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 10))
def test_scale_equivariance(seed, c):
    k = _random_sym(np.random.default_rng(seed), 3)
    d1 = nearest_psd(k, TIGHT, info=True).distance
    d2 = nearest_psd(c * k, TIGHT, info=True).distance
    assert d2 == pytest.approx(c * d1, abs=1e-5 * max(1.0, c))


def test_distance_bounded_by_min_eigenvalue():
    # shifting by |lambda_min| I is always feasible
    rng = np.random.default_rng(4)
    for _ in range(10):
        k = _random_sym(rng, 6)
        lam = np.linalg.eigvalsh(k)[0]
        d = nearest_psd(k, TIGHT, info=True).distance
        assert d <= max(0.0, -lam) + 1e-6


def test_errors():
    with pytest.raises(NotSymmetric):
        nearest_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ShapeMismatch):
        nearest_psd(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        nearest_psd(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        PsdProjectionOptions(relaxation=2.0)
    k = _random_sym(np.random.default_rng(5), 8)
    with pytest.raises(NonConvergence) as info:
        nearest_psd(k, PsdProjectionOptions(max_iters=2, tol_primal=1e-14, tol_dual=1e-14))
    assert info.value.best.shape == (8, 8)


def test_tiny_asymmetry_is_absorbed():
    k = np.array([[1.0, 0.5], [0.5 + 1e-13, 1.0]])
    out = nearest_psd(k)
    np.testing.assert_array_equal(out, out.T)


def test_cone_projection_and_prox():
    k = np.diag([2.0, -1.0])
    np.testing.assert_allclose(project_psd_cone(k), np.diag([2.0, 0.0]), atol=1e-12)
    v = np.array([3.0, -1.0, 0.5])
    # sum of (|v| - tau)_+ = 1 -> tau = 2
    np.testing.assert_allclose(_prox_max_norm(v, 1.0), [2.0, -1.0, 0.5])
    np.testing.assert_array_equal(_prox_max_norm(v, 10.0), np.zeros(3))
