import json
from dataclasses import replace

import numpy as np
import pytest

from cdscore.errors import BadRho, ValidationError
from cdscore.pipeline import TuningSettings
from cdscore.simulation import (
    MC_LASSO_OPTIONS,
    MC_PSD_OPTIONS,
    SimConfig,
    gen_ar1_design,
    gen_dataset,
    population_variance,
    power_curve,
    replication_seed,
    run_monte_carlo,
    scenario_theta,
)
from oracles import ar1_cov

# fixed penalties keep the small harness runs quick
FIXED = TuningSettings(lam=0.05, lambda_prime=0.1, omega_method="lasso",
                       psd=MC_PSD_OPTIONS, lasso=MC_LASSO_OPTIONS)
SMALL = SimConfig(n=60, p=12, replications=6, tuning=FIXED)


def test_ar1_design_covariance():
    x = gen_ar1_design(200_000, 5, 0.5, 0)
    np.testing.assert_allclose(np.cov(x, rowvar=False), ar1_cov(5, 0.5), atol=0.01)
    with pytest.raises(BadRho):
        gen_ar1_design(10, 3, 1.0, 0)
    with pytest.raises(ValidationError):
        gen_ar1_design(0, 3, 0.2, 0)


def test_dataset_moments():
    cfg = SimConfig(n=200_000, p=6, sigma_u=0.3, sigma_eps=0.5)
    d, x = gen_dataset(cfg, 1)
    assert np.std(d.w - x) == pytest.approx(0.3, rel=0.01)
    assert np.std(d.y - cfg.beta * x - d.z @ cfg.gamma) == pytest.approx(0.5, rel=0.01)
    assert d.sigma_u2 == pytest.approx(0.09) and d.eu4 == pytest.approx(3 * 0.09 ** 2)
    assert np.corrcoef(x, d.z[:, 0])[0, 1] == pytest.approx(cfg.rho, abs=0.01)


def test_determinism_and_seed_streams():
    a, _ = gen_dataset(SMALL, 7)
    b, _ = gen_dataset(SMALL, 7)
    c, _ = gen_dataset(SMALL, 8)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)
    firsts = {gen_dataset(SimConfig(n=2, p=2), replication_seed(5, r))[0].y[0]
              for r in range(1000)}
    assert len(firsts) == 1000


def test_population_variance_value():
    # (0.05 * 0.9375 + 3e-4 + 4e-4 - 1e-4) / 0.9375^2
    assert population_variance(SimConfig()) == pytest.approx(0.047475 / 0.87890625, rel=1e-12)
    assert population_variance(SimConfig()) == pytest.approx(0.054016, abs=1e-6)
    assert population_variance(SimConfig(sigma_u=0.0)) == pytest.approx(0.04 / 0.9375)


def test_config_validation():
    assert scenario_theta(2, 4) == (1.0, 0.8, 1.5, 0.0)
    with pytest.raises(ValidationError):
        scenario_theta(3, 10)
    with pytest.raises(ValidationError):
        scenario_theta(2, 2)
    with pytest.raises(ValidationError):
        SimConfig(replications=0)
    with pytest.raises(BadRho):
        SimConfig(rho=-1.0)
    with pytest.raises(ValidationError):
        SimConfig(p=3, theta0=(1.0, 1.0))
    with pytest.raises(ValidationError):
        SimConfig(alpha_levels=(0.0,))
    cfg = SimConfig(p=4, beta_true=0.5)
    assert cfg.beta == 0.5 and cfg.gamma.tolist() == [1.0, 0.0, 0.0]
    json.dumps(cfg.to_dict())


def test_single_replication():
    rep = run_monte_carlo(replace(SMALL, replications=1, keep_records=True))
    assert rep.replications == 1 and rep.valid == 1
    assert np.isnan(rep.estimator["emp_sd"])
    assert rep.records[0]["r"] == 0
    assert all(0 <= row["rate"] <= 1 for row in rep.rejection)


def test_report_is_reproducible_and_worker_independent():
    one = run_monte_carlo(SMALL)
    again = run_monte_carlo(SMALL)
    two = run_monte_carlo(SMALL, workers=2)
    assert one.digest() == again.digest() == two.digest()
    assert one.digest() != run_monte_carlo(replace(SMALL, base_seed=1)).digest()
    out = json.loads(one.to_json())
    assert out["schema_version"] == 1 and out["digest"] == one.digest()
    assert "records" not in out and not out["flagged"]
    assert len(one.level_rows()) == 3 and one.estimator_row()["n"] == 60


def test_failures_are_counted_not_raised():
    bad = replace(SMALL, replications=3,
                  tuning=replace(FIXED, omega_method="ridge"))
    rep = run_monte_carlo(bad)
    assert rep.valid == 0 and rep.failures == {"ValidationError": 3}
    assert rep.flagged and rep.failure_rate == 1.0
    assert np.isnan(rep.rate(0.05))
    with pytest.raises(KeyError):
        rep.rate(0.2)


def test_fast_mode_fixes_tuning():
    cfg = SimConfig(n=60, p=12, replications=3, fast=True, keep_records=True)
    rep = run_monte_carlo(cfg)
    assert rep.fast_mode and rep.fixed_tuning is not None
    lams = {r["lam"] for r in rep.records}
    assert lams == {rep.fixed_tuning["lambda"]}


def test_power_table():
    table = power_curve(replace(SMALL, replications=4), [1.0, 1.5], [0.05, 1.0])
    assert len(table.rows) == 4 and len(table.reports) == 2
    top = [r for r in table.rows if r["alpha"] == 1.0]
    assert all(r["rate"] == 1.0 and r["theoretical"] == 1.0 for r in top)
    null = [r for r in table.rows if r["beta_true"] == 1.0 and r["alpha"] == 0.05][0]
    assert null["theoretical"] == pytest.approx(0.05)
    csv = table.to_csv().splitlines()
    assert csv[0] == "beta_true,alpha,rate,se,valid,theoretical" and len(csv) == 5
    assert table.rates(0.05) == [r["rate"] for r in table.rows if r["alpha"] == 0.05]
    with pytest.raises(ValidationError):
        power_curve(SMALL, [], [0.05])
