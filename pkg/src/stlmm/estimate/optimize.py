"""Derivative-free simplex minimization over unconstrained parameters, and
the maps from those parameters to covariance parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from ..covariance import StDesign, ThetaPS, ThetaSep
from ..kernels import CorrelationModel

FRACTION_FLOOR = 1e-8
_RANGE_LOWER = 1e-4
# ranges far beyond the data extent make a component collinear with the
# intercept, where the restricted likelihood is flat
_RANGE_UPPER = 8.0
_PROP_CLIP = 1e-8


@dataclass
class SimplexOptions:
    max_evals: int = 2000
    fatol: float = 1e-6
    xatol: float = 1e-4
    initial_step: float = 0.5
    restart: bool = True
    polish: int = 3


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    n_evals: int
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _initial_simplex(x0, step):
    x0 = np.asarray(x0, dtype=float)
    sim = np.tile(x0, (x0.size + 1, 1))
    sim[1:] += step * np.eye(x0.size)
    return sim


def minimize_simplex(fun, x0, opts: SimplexOptions | None = None) -> SimplexResult:
    """Nelder-Mead until both the objective spread and the vertex spread are small.

    If the evaluation cap is hit, restart once from the best point with a
    fresh, smaller simplex and a fresh cap. A converged simplex can collapse
    early, so it is rebuilt at the best point up to ``polish`` times while
    that still lowers the objective by more than ``fatol``. ``history`` holds
    the best objective after each iteration.
    """
    opts = opts or SimplexOptions()
    cache = {}

    def f(x):
        key = x.tobytes()
        if key not in cache:
            try:
                val = float(fun(x))
            except (np.linalg.LinAlgError, ValueError, FloatingPointError):
                val = np.inf
            cache[key] = val if np.isfinite(val) else np.inf
        return cache[key]

    def run(x, step):
        return minimize(
            f,
            x,
            method="Nelder-Mead",
            callback=lambda xk: history.append(f(xk)),
            options={
                "maxfev": opts.max_evals,
                "fatol": opts.fatol,
                "xatol": opts.xatol,
                "initial_simplex": _initial_simplex(x, step),
            },
        )

    history, evals, iters = [], 0, 0
    x, fx, converged = np.asarray(x0, dtype=float), np.inf, False
    step, restarts, polished = opts.initial_step, 0, 0
    while True:
        res = run(x, step)
        evals += res.nfev
        iters += res.nit
        gain = fx - float(res.fun)
        if res.fun <= fx:
            x, fx = res.x, float(res.fun)
        if res.status == 0:
            converged = True
            if polished >= opts.polish or gain <= opts.fatol:
                break
            polished += 1
            step = opts.initial_step
        elif opts.restart and restarts == 0 and not converged:
            restarts += 1
            step = 0.5 * opts.initial_step
        else:
            break
    return SimplexResult(x=x, fun=fx, n_evals=evals, iterations=iters, converged=converged, history=history)


def default_ranges(design: StDesign):
    """Half the largest site separation and a quarter of the time span in steps."""
    from scipy.spatial.distance import pdist

    d = pdist(design.sites) if design.S > 1 else np.array([1.0])
    kappa = 0.5 * float(d.max()) if d.max() > 0 else 1.0
    if design.T > 1:
        step = float(np.median(np.diff(np.sort(design.times))))
        phi = design.T * step / 4.0
    else:
        phi = 1.0
    return kappa, phi


class RangeMap:
    """Log-scale ranges, clipped to ``[1e-4, 8]`` times the starting values."""

    def __init__(self, kappa0, phi0, spatial_kind, temporal_kind):
        self.ref = np.log([kappa0, phi0])
        self.kinds = (spatial_kind, temporal_kind)

    def start(self):
        return np.zeros(2)

    def models(self, z):
        lo, hi = np.log(_RANGE_LOWER), np.log(_RANGE_UPPER)
        k, p = np.exp(self.ref + np.clip(z, lo, hi))
        return CorrelationModel(self.kinds[0], k), CorrelationModel(self.kinds[1], p)

    def encode(self, spatial, temporal):
        return np.log([spatial.range, temporal.range]) - self.ref


def fractions(z) -> np.ndarray:
    """Six variance fractions from five log-ratios against the last component.

    Each fraction is floored at ``FRACTION_FLOOR`` before renormalizing.
    """
    a = np.concatenate([np.asarray(z, dtype=float), [0.0]])
    a = np.exp(a - a.max())
    f = a / a.sum()
    f = np.maximum(f, FRACTION_FLOOR)
    return f / f.sum()


def fractions_inverse(f) -> np.ndarray:
    f = np.maximum(np.asarray(f, dtype=float), FRACTION_FLOOR)
    return np.log(f[:-1] / f[-1])


class ShapeMap:
    """Unconstrained vector <-> covariance parameters with unit overall scale.

    Product-sum: five variance log-ratios then two log-ranges. Separable:
    ``logit(v_s), logit(v_t)`` then two log-ranges, with ``sig2_omega = 1``.
    """

    def __init__(self, model, ranges: RangeMap):
        if model not in ("product_sum", "separable"):
            raise ValueError(f"unknown model {model!r}")
        self.model, self.ranges = model, ranges

    @property
    def size(self):
        return 7 if self.model == "product_sum" else 4

    def start(self):
        return np.zeros(self.size)

    def theta(self, z, scale=1.0):
        sp, tp = self.ranges.models(z[-2:])
        if self.model == "product_sum":
            return ThetaPS.from_variances(scale * fractions(z[:5]), sp, tp)
        vs, vt = np.clip(expit(z[:2]), _PROP_CLIP, 1 - _PROP_CLIP)
        return ThetaSep(scale, float(vs), float(vt), sp, tp)

    def encode(self, theta):
        r = self.ranges.encode(theta.spatial, theta.temporal)
        if self.model == "product_sum":
            return np.concatenate([fractions_inverse(theta.variances / theta.total), r])
        v = np.clip([theta.v_s, theta.v_t], _PROP_CLIP, 1 - _PROP_CLIP)
        return np.concatenate([logit(v), r])


class FullMap:
    """Unconstrained vector <-> covariance parameters including the scale.

    Product-sum: six log-variances (floored at ``FRACTION_FLOOR`` of the
    total) then two log-ranges. Separable: ``log sig2_omega``,
    ``logit(v_s), logit(v_t)`` then two log-ranges.
    """

    def __init__(self, model, ranges: RangeMap, var0: float):
        if model not in ("product_sum", "separable"):
            raise ValueError(f"unknown model {model!r}")
        self.model, self.ranges, self.ref = model, ranges, np.log(var0)

    @property
    def size(self):
        return 8 if self.model == "product_sum" else 5

    def start(self):
        z = np.zeros(self.size)
        if self.model == "product_sum":
            z[:6] = -np.log(6.0)
        return z

    def theta(self, z):
        sp, tp = self.ranges.models(z[-2:])
        if self.model == "product_sum":
            v = np.exp(self.ref + np.clip(z[:6], -700, 700))
            v = np.maximum(v, FRACTION_FLOOR * v.sum())
            return ThetaPS.from_variances(v, sp, tp)
        vs, vt = np.clip(expit(z[1:3]), _PROP_CLIP, 1 - _PROP_CLIP)
        return ThetaSep(float(np.exp(self.ref + z[0])), float(vs), float(vt), sp, tp)
