"""Variance configurations and the simulated-data generator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..covariance import StDesign, ThetaPS, ThetaSep
from ..kernels import CorrelationModel, correlation_matrix

KAPPA = 2.25
PHI = 9.0


@dataclass(frozen=True)
class VarianceConfig:
    name: str
    theta: ThetaPS


def _vc(name, *v):
    return VarianceConfig(
        name, ThetaPS(*v, CorrelationModel("exponential", KAPPA), CorrelationModel("exponential", PHI))
    )


CONFIGS = {
    c.name: c
    for c in (
        _vc("VC1", 18, 1, 18, 1, 20, 2),
        _vc("VC2", 16, 4, 16, 4, 16, 4),
        _vc("VC3", 10, 10, 10, 10, 10, 10),
        _vc("VC4", 30, 0.1, 20, 0.1, 2, 7.8),
    )
}


def get_config(name) -> VarianceConfig:
    try:
        return CONFIGS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown variance configuration {name!r}; choose from {sorted(CONFIGS)}") from None


def separable_counterpart(theta: ThetaPS) -> ThetaSep:
    """Separable parameters with the same total variance and nugget shares."""
    d, g, t, e, _, _ = theta.variances
    v_s = g / (d + g) if d + g > 0 else 0.5
    v_t = e / (t + e) if t + e > 0 else 0.5
    return ThetaSep(theta.total, v_s, v_t, theta.spatial, theta.temporal)


@dataclass(frozen=True)
class SimProtocol:
    n_sites: int = 36
    n_times: int = 30
    extent: float = 5.0
    n_test: int = 25
    reps: int = 200
    seed: int = 2024
    beta: tuple = (0.0, 0.0, 0.0, 0.0)

    @property
    def n_train(self):
        return self.n_sites * self.n_times - self.n_test

    def rep_rng(self, rep: int) -> np.random.Generator:
        """Independent stream for repetition ``rep``, reproducible on its own."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(rep,)))


@dataclass
class SimData:
    design: StDesign  # training cells observed, test cells not
    X_full: np.ndarray  # one row per grid cell, canonical order
    y_full: np.ndarray
    train: np.ndarray  # cell indices
    test: np.ndarray

    @property
    def X(self):
        return self.X_full[self.train]

    @property
    def y(self):
        return self.y_full[self.train]


def _chol(r):
    return np.linalg.cholesky(r + 1e-12 * np.eye(r.shape[0]))


def simulate_errors(theta: ThetaPS, sites, times, rng) -> np.ndarray:
    """One draw of the six error components summed on the full grid.

    Only S- and T-sized factors are used; the product component is
    ``L_t Z L_s'`` read out time-major.
    """
    S, T = len(sites), len(times)
    d, g, t, e, w, eps = theta.variances
    ls = _chol(correlation_matrix(theta.spatial, sites))
    lt = _chol(correlation_matrix(theta.temporal, times))
    delta = np.sqrt(d) * ls @ rng.standard_normal(S)
    gamma = np.sqrt(g) * rng.standard_normal(S)
    tau = np.sqrt(t) * lt @ rng.standard_normal(T)
    eta = np.sqrt(e) * rng.standard_normal(T)
    omega = np.sqrt(w) * lt @ rng.standard_normal((T, S)) @ ls.T
    err = (delta + gamma)[None, :] + (tau + eta)[:, None] + omega
    return err.ravel() + np.sqrt(eps) * rng.standard_normal(S * T)


def simulate_dataset(cfg: VarianceConfig, proto: SimProtocol, rep: int) -> SimData:
    rng = proto.rep_rng(rep)
    S, T = proto.n_sites, proto.n_times
    sites = rng.uniform(0.0, proto.extent, size=(S, 2))
    times = np.arange(1, T + 1, dtype=float)
    x1 = np.repeat(rng.standard_normal(T), S)
    x2 = np.tile(rng.standard_normal(S), T)
    x3 = rng.standard_normal(S * T)
    X = np.column_stack([np.ones(S * T), x1, x2, x3])
    y = X @ np.asarray(proto.beta, dtype=float) + simulate_errors(cfg.theta, sites, times, rng)
    test = np.sort(rng.choice(S * T, size=proto.n_test, replace=False))
    observed = np.ones(S * T, dtype=bool)
    observed[test] = False
    design = StDesign(sites, times, observed)
    return SimData(design, X, y, design.obs_index, test)
