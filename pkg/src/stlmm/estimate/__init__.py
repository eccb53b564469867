"""Covariance-parameter and fixed-effect estimation."""
from .gls import EstimabilityError, FitResult, fit_ols, gls, gls_parts, nugget_theta, wald_test
from .optimize import SimplexOptions, minimize_simplex
from .reml import RemlOptions, fit_reml, neg2_reml, profile_variance

__all__ = [
    "EstimabilityError", "FitResult", "fit_ols", "gls", "gls_parts", "nugget_theta", "wald_test",
    "SimplexOptions", "minimize_simplex", "RemlOptions", "fit_reml", "neg2_reml", "profile_variance",
]
from .semivariogram import BinSpec, CwlsOptions, EmpSv, EmptyClassesError, cwls_objective, empirical_sv, fit_cwls

__all__ += ["BinSpec", "CwlsOptions", "EmpSv", "EmptyClassesError", "cwls_objective", "empirical_sv", "fit_cwls"]
