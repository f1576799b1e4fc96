"""Constant arithmetic, regime classification, weak residuals and refinement studies."""

from .constants import (
    ThresholdReport,
    b_threshold,
    classify_regime,
    default_lambda_phi,
    eventual_delta,
    kappa1,
    kappa2,
    ode_comparison_bound,
)
from .studies import EpsStudy, MMSResult, Problem, eps_convergence_study, mms_convergence
from .weak import TestFunction, test_function_family, weak_residual

__all__ = [
    "EpsStudy",
    "MMSResult",
    "Problem",
    "TestFunction",
    "ThresholdReport",
    "b_threshold",
    "classify_regime",
    "default_lambda_phi",
    "eps_convergence_study",
    "eventual_delta",
    "kappa1",
    "kappa2",
    "mms_convergence",
    "ode_comparison_bound",
    "test_function_family",
    "weak_residual",
]
