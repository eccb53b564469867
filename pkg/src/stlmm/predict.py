"""Best linear unbiased prediction at grid cells."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import StDesign, component_correlations, cross_cov, lag_covariance, signal_variance
from .fastsolve import hw_solve

Z_95 = 1.96


@dataclass
class PredictionResult:
    targets: np.ndarray
    y_hat: np.ndarray
    pred_var: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def se(self):
        return np.sqrt(self.pred_var)


def blup(fit, design: StDesign, X_o, y_o, X_u, targets, chunk: int = 512) -> PredictionResult:
    """Predictions, prediction variances and 95% intervals at ``targets``.

    ``targets`` are canonical cell indices of ``design``; extend the design
    first to predict at new sites or times. At a target that is an observed
    cell the prediction is smoothed: it targets the dependent part of the
    process there, so the nugget variances (site, time and cell level) are
    left out of its covariances. All solves with the observed covariance go
    through :func:`hw_solve`; only the variance diagonal is formed.
    """
    theta = fit.theta_hat
    X_o = np.asarray(X_o, dtype=float)
    y_o = np.asarray(y_o, dtype=float)
    X_u = np.atleast_2d(np.asarray(X_u, dtype=float))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.intp))
    if X_u.shape[0] != targets.size:
        raise ValueError(f"X_u has {X_u.shape[0]} rows for {targets.size} targets")
    if targets.size and (targets.min() < 0 or targets.max() >= design.S * design.T):
        raise ValueError("target cell outside the design grid")
    beta = np.asarray(fit.beta_hat, dtype=float)
    corr = component_correlations(theta, design)
    obs = design.obs_index
    base = hw_solve(theta, design, np.column_stack([y_o - X_o @ beta, X_o]), corr).sigma_inv_rhs
    si_r, si_x = base[:, 0], base[:, 1:]
    xtsx = X_o.T @ si_x
    xtsx_inv = np.linalg.inv(0.5 * (xtsx + xtsx.T))
    seen = design.observed[targets] if targets.size else np.zeros(0, dtype=bool)
    sill = np.where(seen, signal_variance(theta), float(lag_covariance(theta, 0.0, 0.0)))

    y_hat = np.empty(targets.size)
    var = np.empty(targets.size)
    for start in range(0, targets.size, chunk):
        sl = slice(start, start + chunk)
        s_uo = cross_cov(theta, design, targets[sl], obs, corr)
        smooth = seen[sl]
        if smooth.any():
            s_uo[smooth] = cross_cov(theta, design, targets[sl][smooth], obs, corr, signal=True)
        y_hat[sl] = X_u[sl] @ beta + s_uo @ si_r
        si_ou = hw_solve(theta, design, s_uo.T, corr).sigma_inv_rhs
        h = X_u[sl] - s_uo @ si_x
        var[sl] = sill[sl] - np.einsum("ij,ji->i", s_uo, si_ou) + np.einsum("ij,jk,ik->i", h, xtsx_inv, h)
    var = np.maximum(var, 0.0)
    half = Z_95 * np.sqrt(var)
    return PredictionResult(targets, y_hat, var, y_hat - half, y_hat + half)
