"""Seeded Monte Carlo harness for the AR(1) measurement-error design.

Covariates are Gaussian with AR(1) correlation ``rho^|j-k|``; the first one
is observed only through ``w = x + u``.  Each replication draws fresh data,
runs the full pipeline and tests ``H0: beta = beta_star``.
"""
from __future__ import annotations

import hashlib
import json
import time
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial

import numpy as np

from .cocolasso import LassoOptions
from .errors import BadRho, CDScoreError, ValidationError
from .inference import theoretical_power
from .model_data import Dataset
from .pipeline import TuningSettings, run_pipeline, select_tuning
from .psd import PsdProjectionOptions

__all__ = [
    "MC_LASSO_OPTIONS",
    "MC_PSD_OPTIONS",
    "PowerTable",
    "SimConfig",
    "SimReport",
    "gen_ar1_design",
    "gen_dataset",
    "population_variance",
    "power_curve",
    "run_monte_carlo",
    "scenario_theta",
]

SCHEMA_VERSION = 1

# Looser than the library defaults: thousands of replications on a desk
# machine, and the test statistic is insensitive at this level.
MC_PSD_OPTIONS = PsdProjectionOptions(tol_primal=1e-4, tol_dual=1e-4)
MC_LASSO_OPTIONS = LassoOptions(tol=1e-7, kkt_tol=1e-5)

_SCENARIOS = {1: (1.0, 1.0), 2: (1.0, 0.8, 1.5)}


def scenario_theta(scenario: int, p: int) -> tuple:
    """Leading coefficients of a named scenario, zero-padded to length ``p``."""
    try:
        head = _SCENARIOS[scenario]
    except KeyError:
        raise ValidationError(f"unknown scenario {scenario}; choose from {sorted(_SCENARIOS)}")
    if p < len(head):
        raise ValidationError(f"scenario {scenario} needs p >= {len(head)}")
    return head + (0.0,) * (p - len(head))


def _seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def gen_ar1_design(n: int, p: int, rho: float, seed) -> np.ndarray:
    """Rows iid ``N(0, Sigma)`` with ``Sigma_jk = rho^|j-k|`` via the AR(1) recursion."""
    if not abs(rho) < 1:
        raise BadRho(f"AR(1) parameter must satisfy |rho| < 1, got {rho}")
    if n < 1 or p < 1:
        raise ValidationError(f"need n, p >= 1, got n={n}, p={p}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(_seed_seq(seed))
    e = rng.standard_normal((n, p))
    c = np.sqrt(1.0 - rho * rho)
    x = np.empty_like(e)
    x[:, 0] = e[:, 0]
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + c * e[:, j]
    return x


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    p: int = 250
    rho: float = 0.25
    sigma_eps: float = 0.2
    sigma_u: float = 0.1
    theta0: tuple | None = None
    beta_true: float | None = None
    beta_star: float = 1.0
    replications: int = 500
    base_seed: int = 20240601
    omega_method: str = "lasso"
    alpha_levels: tuple = (0.01, 0.05, 0.10)
    ci_alpha: float = 0.05
    fast: bool = False
    keep_records: bool = False
    tuning: TuningSettings | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError(f"replications must be >= 1, got {self.replications}")
        if self.n < 2 or self.p < 2:
            raise ValidationError(f"need n >= 2 and p >= 2, got n={self.n}, p={self.p}")
        if not abs(self.rho) < 1:
            raise BadRho(f"AR(1) parameter must satisfy |rho| < 1, got {self.rho}")
        if self.sigma_eps < 0 or self.sigma_u < 0:
            raise ValidationError("sigma_eps and sigma_u must be nonnegative")
        theta = self.theta0 if self.theta0 is not None else scenario_theta(1, self.p)
        theta = tuple(float(t) for t in theta)
        if len(theta) != self.p:
            raise ValidationError(f"theta0 has length {len(theta)}, expected p={self.p}")
        object.__setattr__(self, "theta0", theta)
        levels = tuple(float(a) for a in self.alpha_levels)
        if not levels or any(not 0 < a <= 1 for a in levels):
            raise ValidationError(f"alpha levels must lie in (0, 1], got {levels}")
        object.__setattr__(self, "alpha_levels", levels)

    @property
    def beta(self) -> float:
        return self.theta0[0] if self.beta_true is None else float(self.beta_true)

    @property
    def gamma(self) -> np.ndarray:
        return np.array(self.theta0[1:])

    def resolved_tuning(self) -> TuningSettings:
        if self.tuning is not None:
            return self.tuning
        return TuningSettings(omega_method=self.omega_method, psd=MC_PSD_OPTIONS,
                              lasso=MC_LASSO_OPTIONS)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "tuning"}
        out["theta0_nonzero"] = {str(j): t for j, t in enumerate(self.theta0) if t != 0}
        del out["theta0"]
        out["beta"] = self.beta
        out["tuning"] = self.resolved_tuning().to_dict()
        return out


def gen_dataset(cfg: SimConfig, seed) -> tuple[Dataset, np.ndarray]:
    """Draw one dataset; returns it with the latent ``x`` for diagnostics."""
    s_design, s_noise, s_err = _seed_seq(seed).spawn(3)
    xz = gen_ar1_design(cfg.n, cfg.p, cfg.rho, s_design)
    x, z = xz[:, 0], xz[:, 1:]
    eps = cfg.sigma_eps * np.random.default_rng(s_noise).standard_normal(cfg.n)
    y = cfg.beta * x + z @ cfg.gamma + eps
    w = x + cfg.sigma_u * np.random.default_rng(s_err).standard_normal(cfg.n)
    su2 = cfg.sigma_u ** 2
    return Dataset(y, w, z, su2, 3.0 * su2 * su2), x


def population_variance(cfg: SimConfig, beta: float | None = None) -> float:
    """Population asymptotic variance of the one-step estimator.

    For AR(1) covariates the population ``omega`` is ``(rho, 0, ...)``, so
    ``omega' E(XZ) = rho^2``.  Gaussian errors give ``E(U^4) = 3 sigma_u^4``.
    """
    b = cfg.beta if beta is None else beta
    se2, su2 = cfg.sigma_eps ** 2, cfg.sigma_u ** 2
    proj = cfg.rho ** 2
    num = (se2 + b * b * su2) * (1 - proj) + 3 * b * b * su2 ** 2 + se2 * su2 - b * b * su2 ** 2
    return num / (1 - proj) ** 2


def replication_seed(base_seed: int, r: int) -> np.random.SeedSequence:
    """Independent stream for replication ``r``; injective in ``r``."""
    return np.random.SeedSequence(base_seed, spawn_key=(r,))


def _fixed_tuning(cfg: SimConfig) -> tuple[float, float]:
    # tuning from replication 0, reused across the cell in fast mode
    d, _ = gen_dataset(cfg, replication_seed(cfg.base_seed, 0).spawn(2)[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lam, lp, _, _ = select_tuning(d, cfg.resolved_tuning(),
                                      replication_seed(cfg.base_seed, 0).spawn(2)[1])
    return lam, lp


def _replicate(cfg: SimConfig, fixed: tuple | None, r: int) -> dict:
    s_data, s_cv = replication_seed(cfg.base_seed, r).spawn(2)
    tuning = cfg.resolved_tuning()
    if fixed is not None:
        tuning = replace(tuning, lam=fixed[0], lambda_prime=fixed[1])
    rec = {"r": r}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            d, _ = gen_dataset(cfg, s_data)
            res = run_pipeline(d, tuning, beta_star=cfg.beta_star, alpha=cfg.ci_alpha, seed=s_cv)
        except (CDScoreError, np.linalg.LinAlgError) as exc:
            rec["error"] = type(exc).__name__
            return rec
    rec.update(
        error=None,
        t_stat=res.test.t_stat,
        p_value=res.test.p_value,
        beta_hat=res.one_step.beta_hat,
        se=res.one_step.se,
        ci_low=res.one_step.ci_low,
        ci_high=res.one_step.ci_high,
        lam=res.theta.lam,
        lambda_prime=res.omega.lambda_prime,
        support_size=int(res.theta.support.size),
        omega_l1=res.omega.l1_norm,
        psd_iterations=int(res.moments.projection_iters),
        warnings=dict(sorted(Counter(type(w.message).__name__ for w in caught).items())),
    )
    return rec


def _binom_se(rate: float, count: int) -> float:
    return float(np.sqrt(rate * (1 - rate) / count)) if count else float("nan")


@dataclass(frozen=True)
class SimReport:
    config: dict
    replications: int
    valid: int
    failures: dict
    rejection: list
    estimator: dict
    diagnostics: dict
    fast_mode: bool
    fixed_tuning: dict | None
    records: list | None = None
    elapsed_seconds: float = field(default=0.0, compare=False)

    @property
    def failure_rate(self) -> float:
        return (self.replications - self.valid) / self.replications

    @property
    def flagged(self) -> bool:
        """More than 2% of replications failed."""
        return self.failure_rate > 0.02

    def rate(self, alpha: float) -> float:
        for row in self.rejection:
            if np.isclose(row["alpha"], alpha):
                return row["rate"]
        raise KeyError(alpha)

    def to_dict(self, timing: bool = True) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        out.update(asdict(self))
        out["failure_rate"] = self.failure_rate
        out["flagged"] = self.flagged
        if not timing:
            del out["elapsed_seconds"]
        if self.records is None:
            del out["records"]
        return out

    def digest(self) -> str:
        """SHA-256 of the canonical report with wall-clock timing left out."""
        blob = json.dumps(self.to_dict(timing=False), sort_keys=True, allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self, **kw) -> str:
        out = self.to_dict()
        out["digest"] = self.digest()
        return json.dumps(out, indent=2, sort_keys=True, **kw)

    def level_rows(self) -> list[dict]:
        """One row per significance level, shaped like a type-I-error table."""
        c = self.config
        return [{"n": c["n"], "p": c["p"], "rho": c["rho"], "sigma_u": c["sigma_u"],
                 "beta": c["beta"], "alpha": row["alpha"], "rate": row["rate"],
                 "se": row["se"], "valid": self.valid} for row in self.rejection]

    def estimator_row(self) -> dict:
        c = self.config
        row = {"n": c["n"], "p": c["p"], "rho": c["rho"], "sigma_u": c["sigma_u"]}
        row.update(self.estimator)
        return row


def _summarize(cfg: SimConfig, recs: list[dict], fixed, elapsed: float) -> SimReport:
    ok = [r for r in recs if r["error"] is None]
    fails = dict(sorted(Counter(r["error"] for r in recs if r["error"] is not None).items()))
    k = len(ok)
    pvals = np.array([r["p_value"] for r in ok])
    rejection = []
    for a in cfg.alpha_levels:
        hits = int(np.sum(pvals < a)) if a < 1 else k
        rate = hits / k if k else float("nan")
        rejection.append({"alpha": a, "rejections": hits, "rate": rate,
                          "se": _binom_se(rate, k)})
    if k:
        bh = np.array([r["beta_hat"] for r in ok])
        cover = np.mean([r["ci_low"] <= cfg.beta <= r["ci_high"] for r in ok])
        estimator = {
            "beta": cfg.beta,
            "mean": float(bh.mean()),
            "emp_sd": float(bh.std(ddof=1)) if k > 1 else float("nan"),
            "est_sd": float(np.mean([r["se"] for r in ok])),
            "coverage": float(cover),
            "ci_level": 1.0 - cfg.ci_alpha,
        }
        diagnostics = {
            "median_lambda": float(np.median([r["lam"] for r in ok])),
            "median_lambda_prime": float(np.median([r["lambda_prime"] for r in ok])),
            "mean_support_size": float(np.mean([r["support_size"] for r in ok])),
            "mean_omega_l1": float(np.mean([r["omega_l1"] for r in ok])),
            "mean_psd_iterations": float(np.mean([r["psd_iterations"] for r in ok])),
            "warnings": dict(sorted(sum((Counter(r["warnings"]) for r in ok), Counter()).items())),
        }
    else:
        estimator, diagnostics = {}, {}
    fixed_d = None if fixed is None else {"lambda": fixed[0], "lambda_prime": fixed[1]}
    return SimReport(cfg.to_dict(), len(recs), k, fails, rejection, estimator, diagnostics,
                     cfg.fast, fixed_d, recs if cfg.keep_records else None, elapsed)


def _map(fn, count: int, workers: int) -> list:
    if workers <= 1 or count <= 1:
        return [fn(r) for r in range(count)]
    chunk = max(1, count // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count), chunksize=chunk))


def run_monte_carlo(cfg: SimConfig, workers: int = 1) -> SimReport:
    """Run ``cfg.replications`` seeded replications and aggregate them.

    Records are ordered by replication index before aggregation, so the
    report does not depend on ``workers``.  Failed replications are counted
    by exception type and left out of every rate.
    """
    t0 = time.perf_counter()
    fixed = _fixed_tuning(cfg) if cfg.fast else None
    recs = _map(partial(_replicate, cfg, fixed), cfg.replications, workers)
    recs.sort(key=lambda r: r["r"])
    return _summarize(cfg, recs, fixed, time.perf_counter() - t0)


@dataclass(frozen=True)
class PowerTable:
    rows: list
    reports: list = field(repr=False, default_factory=list)

    COLUMNS = ("beta_true", "alpha", "rate", "se", "valid", "theoretical")

    def rates(self, alpha: float) -> list[float]:
        return [r["rate"] for r in self.rows if np.isclose(r["alpha"], alpha)]

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c])
                                  for c in self.COLUMNS))
        return "\n".join(lines) + "\n"


def power_curve(cfg: SimConfig, beta_grid, alpha_grid, workers: int = 1) -> PowerTable:
    """Rejection rates over ``beta_true`` x ``alpha``.

    Every grid point reuses ``cfg.base_seed``, so the cells share their
    design and noise draws and differ only through ``beta_true``.  The
    ``theoretical`` column is the local-alternative power at the population
    variance.
    """
    betas = [float(b) for b in np.atleast_1d(beta_grid)]
    alphas = tuple(float(a) for a in np.atleast_1d(alpha_grid))
    if not betas or not alphas:
        raise ValidationError("beta and alpha grids must be nonempty")
    rows, reports = [], []
    for b in betas:
        rep = run_monte_carlo(replace(cfg, beta_true=b, alpha_levels=alphas), workers)
        reports.append(rep)
        var = population_variance(cfg, cfg.beta_star)
        h = np.sqrt(cfg.n) * (b - cfg.beta_star)
        for row in rep.rejection:
            a = row["alpha"]
            theo = 1.0 if a >= 1 else theoretical_power(h, var, a)
            rows.append({"beta_true": b, "alpha": a, "rate": row["rate"], "se": row["se"],
                         "valid": rep.valid, "theoretical": float(theo)})
    return PowerTable(rows, reports)

