"""The four-step procedure: CoCoLasso, omega, score test, one-step + CI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocolasso import (
    CorrectedMoments,
    CVTable,
    LassoOptions,
    ThetaEstimate,
    cocolasso_fit,
    corrected_moments,
    cv_select_lambda,
)
from .decorrelation import OmegaEstimate, cv_select_lambda_prime, estimate_omega
from .inference import OneStepResult, TestResult, one_step, score_test
from .model_data import Dataset
from .psd import PsdProjectionOptions

__all__ = ["PipelineResult", "TuningSettings", "run_pipeline"]


@dataclass(frozen=True)
class TuningSettings:
    """Tuning knobs; ``None`` for a penalty means "choose by cross-validation"."""

    lam: float | None = None
    lambda_prime: float | None = None
    lam_grid: np.ndarray | None = None
    lambda_prime_grid: np.ndarray | None = None
    folds: int = 5
    folds_prime: int = 4
    omega_method: str = "dantzig"
    refit: bool = True
    psd: PsdProjectionOptions | None = None
    lasso: LassoOptions | None = None

    def to_dict(self) -> dict:
        psd = self.psd or PsdProjectionOptions()
        return {
            "lambda": self.lam,
            "lambda_prime": self.lambda_prime,
            "folds": self.folds,
            "folds_prime": self.folds_prime,
            "omega_method": self.omega_method,
            "refit": self.refit,
            "psd": {"admm_rho": psd.admm_rho, "tol_primal": psd.tol_primal,
                    "tol_dual": psd.tol_dual, "max_iters": psd.max_iters,
                    "eig_floor": psd.eig_floor, "relaxation": psd.relaxation},
        }


@dataclass(frozen=True)
class PipelineResult:
    moments: CorrectedMoments
    theta: ThetaEstimate
    omega: OmegaEstimate
    test: TestResult | None
    one_step: OneStepResult | None
    lambda_cv: CVTable | None
    lambda_prime_cv: CVTable | None


def select_tuning(d: Dataset, tuning: TuningSettings, seed=0) -> tuple[float, float, CVTable | None, CVTable | None]:
    """Resolve both penalties, running cross-validation where not fixed."""
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_lam, s_lp = ss.spawn(2)
    lam_cv = lp_cv = None
    lam = tuning.lam
    if lam is None:
        lam, lam_cv = cv_select_lambda(d, tuning.lam_grid, tuning.folds, tuning.psd,
                                       seed=s_lam, refit=tuning.refit, lasso_opts=tuning.lasso)
    lp = tuning.lambda_prime
    if lp is None:
        lp, lp_cv = cv_select_lambda_prime(d, tuning.lambda_prime_grid, tuning.folds_prime,
                                           method=tuning.omega_method, seed=s_lp,
                                           lasso_opts=tuning.lasso)
    return float(lam), float(lp), lam_cv, lp_cv


def run_pipeline(d: Dataset, tuning: TuningSettings | None = None, *,
                 beta_star: float | None = 0.0, alpha: float = 0.05,
                 seed=0, with_test: bool = True, with_ci: bool = True) -> PipelineResult:
    tuning = tuning or TuningSettings()
    lam, lp, lam_cv, lp_cv = select_tuning(d, tuning, seed)
    m = corrected_moments(d, tuning.psd)
    theta = cocolasso_fit(d, lam, tuning.refit, lasso_opts=tuning.lasso, moments=m)
    kwargs = {"opts": tuning.lasso} if tuning.omega_method == "lasso" else {}
    omega = estimate_omega(m, lp, tuning.omega_method, **kwargs)
    test = score_test(d, m, beta_star, theta, omega, alpha) if with_test else None
    ci = one_step(d, m, theta, omega, alpha) if with_ci else None
    return PipelineResult(m, theta, omega, test, ci, lam_cv, lp_cv)
