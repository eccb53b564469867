"""Isotropic correlation functions of spatial and temporal distance.

All kernels use the effective-range convention: the exponential and
Gaussian kernels decay to ``exp(-3)`` (about 5%) at ``h == range``, and the
spherical kernel reaches exactly zero there.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist


class DomainError(ValueError):
    """Raised for negative or non-finite distances."""


class Kind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    SPHERICAL = "spherical"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class CorrelationModel:
    """A stationary isotropic correlation function.

    Parameters
    ----------
    kind : Kind or str
        One of ``exponential``, ``spherical``, ``gaussian``.
    range : float
        Effective range, in km for space and in time units for time.
    """

    kind: Kind
    range: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        r = float(self.range)
        if not np.isfinite(r) or r <= 0:
            raise ValueError(f"range must be positive and finite, got {self.range!r}")
        object.__setattr__(self, "range", r)

    def with_range(self, new_range: float) -> "CorrelationModel":
        return CorrelationModel(self.kind, new_range)

    def __call__(self, h):
        return correlate(self, h)


def _corr_unchecked(kind: Kind, rng: float, h: np.ndarray) -> np.ndarray:
    u = h / rng
    if kind is Kind.EXPONENTIAL:
        return np.exp(-3.0 * u)
    if kind is Kind.GAUSSIAN:
        return np.exp(-3.0 * u * u)
    # spherical: compact support on [0, range]
    return np.where(u < 1.0, 1.0 - 1.5 * u + 0.5 * u**3, 0.0)


def correlate(model: CorrelationModel, h):
    """Evaluate ``model`` at distance(s) ``h``.

    Scalars in give a float out; arrays keep their shape.
    """
    arr = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("distance must be finite")
    if np.any(arr < 0):
        raise DomainError("distance must be non-negative")
    out = _corr_unchecked(model.kind, model.range, arr)
    if out.ndim == 0:
        return float(out)
    return out


def as_points(points) -> np.ndarray:
    """Coerce a list of locations to an ``(n, d)`` float array (times become ``(n, 1)``)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("points must be non-empty")
    return pts


def distance_matrix(a, b=None) -> np.ndarray:
    """Euclidean distances between locations (absolute difference for 1-D times)."""
    pa = as_points(a)
    pb = pa if b is None else as_points(b)
    return cdist(pa, pb)


def correlation_matrix(model: CorrelationModel, points) -> np.ndarray:
    """Correlation matrix ``R[i, j] = correlate(model, d(p_i, p_j))``.

    Duplicate locations are allowed but make ``R`` singular for the
    exponential and spherical kernels; a ``RuntimeWarning`` is issued.
    """
    d = distance_matrix(points)
    if not np.all(np.isfinite(d)):
        raise DomainError("pairwise distances must be finite")
    n = d.shape[0]
    if n > 1:
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off == 0.0):
            warnings.warn(
                "duplicate locations: correlation matrix is singular",
                RuntimeWarning,
                stacklevel=2,
            )
    r = _corr_unchecked(model.kind, model.range, d)
    np.fill_diagonal(r, 1.0)
    return r
