import warnings

import numpy as np
import pytest

from cdscore.cocolasso import CorrectedMoments, corrected_moments
from cdscore.decorrelation import (
    cv_select_lambda_prime,
    dantzig_omega,
    default_lambda_prime_grid,
    estimate_omega,
    lasso_omega,
)
from cdscore.errors import EmptyGrid, FoldTooSmall, Infeasible, ValidationError
from cdscore.simulation import SimConfig, gen_dataset
from oracles import dantzig_vertex_oracle, population_omega


def _moments(s12, s22):
    s12 = np.asarray(s12, dtype=float)
    s22 = np.asarray(s22, dtype=float)
    q = s12.size
    sig = np.empty((q + 1, q + 1))
    sig[0, 0] = 1.0
    sig[0, 1:] = sig[1:, 0] = s12
    sig[1:, 1:] = s22
    return CorrectedMoments(sig, sig, np.zeros(q + 1), 100, 0.0)


def _random_instance(rng, q):
    k = int(rng.integers(1, 2 * q + 2))
    a = rng.normal(size=(k, q + 1))
    g = a.T @ a / k
    return g[0, 1:], g[1:, 1:]


@pytest.mark.parametrize("method", ["dantzig", "lasso"])
def test_zero_above_threshold(method):
    m = _moments([0.3, -0.2], np.eye(2))
    out = estimate_omega(m, 0.3, method)
    np.testing.assert_array_equal(out.omega, np.zeros(2))
    assert out.l1_norm == 0.0


@pytest.mark.parametrize("method", ["dantzig", "lasso"])
def test_orthogonal_soft_threshold(method):
    m = _moments([0.9, 0.1], np.eye(2))
    out = estimate_omega(m, 0.2, method)
    np.testing.assert_allclose(out.omega, [0.7, 0.0], atol=1e-10)


def test_dantzig_matches_vertex_oracle():
    rng = np.random.default_rng(0)
    for _ in range(25):
        q = int(rng.integers(1, 6))
        s12, s22 = _random_instance(rng, q)
        lam = float(rng.uniform(0.05, 0.9)) * np.abs(s12).max()
        best, _ = dantzig_vertex_oracle(s22, s12, lam)
        out = dantzig_omega(_moments(s12, s22), lam)
        assert out.l1_norm == pytest.approx(best, abs=1e-6)
        assert out.feasibility_gap <= 1e-8


def test_lasso_solution_is_dantzig_feasible():
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = int(rng.integers(1, 8))
        s12, s22 = _random_instance(rng, q)
        lam = float(rng.uniform(0.05, 0.9)) * np.abs(s12).max()
        m = _moments(s12, s22)
        las = lasso_omega(m, lam)
        dan = dantzig_omega(m, lam)
        assert las.feasibility_gap <= 1e-6
        # the Dantzig program minimizes the l1 norm over that feasible set
        assert dan.l1_norm <= las.l1_norm + 1e-6


def test_infeasible_program_is_reported():
    m = _moments([1.0, -1.0], [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(Infeasible):
        dantzig_omega(m, 0.1)


def test_both_methods_approach_exact_solve():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(10_000, 6)) @ np.linalg.cholesky(
        0.4 * np.ones((6, 6)) + 0.6 * np.eye(6)).T
    from cdscore.model_data import Dataset
    d = Dataset(rng.normal(size=10_000), x[:, 0], x[:, 1:], 0.0)
    m = corrected_moments(d)
    exact = np.linalg.solve(m.s22, m.s12)
    for method in ("dantzig", "lasso"):
        out = estimate_omega(m, 1e-8, method)
        np.testing.assert_allclose(out.omega, exact, atol=1e-4)


def test_ar1_omega_concentrates_on_first_column():
    cfg = SimConfig(n=200, p=50, rho=0.5)
    d, _ = gen_dataset(cfg, 4)
    pop = population_omega(cfg.p, cfg.rho)
    np.testing.assert_allclose(pop, np.r_[0.5, np.zeros(cfg.p - 2)], atol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lp, _ = cv_select_lambda_prime(d, seed=0)
    m = corrected_moments(d, project=False)
    out = lasso_omega(m, lp)
    assert out.omega[0] != 0
    assert abs(out.omega[0]) == np.abs(out.omega).max()


def test_cv_lambda_prime_is_of_the_right_order():
    cfg = SimConfig(n=100, p=250)
    rate = np.sqrt(np.log(cfg.p) / cfg.n)
    for seed in range(3):
        d, _ = gen_dataset(cfg, seed)
        lp, table = cv_select_lambda_prime(d, seed=seed)
        assert 0.1 * rate <= lp <= 10 * rate
        assert table.scores.shape == (4, 30)


def test_default_grid_and_cv_contract():
    g = default_lambda_prime_grid(100, 250)
    rate = np.sqrt(np.log(250) / 100)
    assert g.size == 30
    assert g[0] == pytest.approx(3 * rate) and g[-1] == pytest.approx(0.01 * rate)
    d, _ = gen_dataset(SimConfig(n=40, p=8), 1)
    assert cv_select_lambda_prime(d, [0.2])[0] == 0.2
    # both penalties zero out omega, so the scores tie exactly
    lp, table = cv_select_lambda_prime(d, [50.0, 80.0], k_folds=2)
    assert lp == 80.0 and table.best_index == 1
    assert cv_select_lambda_prime(d, [0.3, 0.3], k_folds=2)[1].best_index == 0
    with pytest.raises(EmptyGrid):
        cv_select_lambda_prime(d, [])
    with pytest.raises(FoldTooSmall):
        cv_select_lambda_prime(d, k_folds=30)
    with pytest.raises(ValidationError):
        cv_select_lambda_prime(d, method="ridge")
    with pytest.raises(ValidationError):
        estimate_omega(corrected_moments(d), 0.1, "ridge")
    with pytest.raises(ValidationError):
        dantzig_omega(corrected_moments(d), 0.0)


def test_dantzig_cv_runs():
    d, _ = gen_dataset(SimConfig(n=40, p=8), 2)
    lp, table = cv_select_lambda_prime(d, method="dantzig", seed=3)
    assert np.isfinite(table.mean).any()
    assert lp in table.grid
