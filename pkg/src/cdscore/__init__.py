"""Corrected decorrelated score inference with an error-prone covariate."""
from .cocolasso import cocolasso_fit, corrected_moments, cv_select_lambda, lasso_gram_solve
from .decorrelation import cv_select_lambda_prime, dantzig_omega, estimate_omega, lasso_omega
from .inference import one_step, score_test, theoretical_power
from .model_data import Dataset, estimate_error_moments, standardize, surrogate_from_replicates
from .pipeline import TuningSettings, run_pipeline
from .psd import PsdProjectionOptions, nearest_psd
from .simulation import SimConfig, power_curve, run_monte_carlo

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "PsdProjectionOptions",
    "SimConfig",
    "TuningSettings",
    "cocolasso_fit",
    "corrected_moments",
    "cv_select_lambda",
    "cv_select_lambda_prime",
    "dantzig_omega",
    "estimate_error_moments",
    "estimate_omega",
    "lasso_gram_solve",
    "lasso_omega",
    "nearest_psd",
    "one_step",
    "power_curve",
    "run_monte_carlo",
    "run_pipeline",
    "score_test",
    "standardize",
    "surrogate_from_replicates",
    "theoretical_power",
]
