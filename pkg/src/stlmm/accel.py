"""Backend selection for the pairwise kernels.

The compiled extension is used when it imports; set ``STLMM_PURE_PYTHON=1``
to force the numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _purepy

if os.environ.get("STLMM_PURE_PYTHON") == "1":
    _impl = _purepy
else:
    try:
        from . import _speedups as _impl
    except ImportError:  # extension not built
        _impl = _purepy

BACKEND = "compiled" if _impl is not _purepy else "python"


def _idx(a):
    return np.ascontiguousarray(a, dtype=np.intp)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def fill_cov(rs, rt, sa, ta, sb, tb, coefs, impl=None):
    """Covariance between cell lists ``(sa, ta)`` and ``(sb, tb)``.

    ``coefs`` holds, in order: spatial dependent, spatial nugget, temporal
    dependent, temporal nugget, product weight, spatial corr/nugget weights
    inside the product, temporal corr/nugget weights inside the product,
    and the cell nugget.
    """
    impl = impl or _impl
    return impl.fill_cov(_f64(rs), _f64(rt), _idx(sa), _idx(ta), _idx(sb), _idx(tb), _f64(coefs))


def sv_accumulate(site, time, resid, sclass, tclass, sdist, tdist, ns, nt, impl=None):
    """Per-class sums of squared residual differences, pair counts and lag sums."""
    impl = impl or _impl
    return impl.sv_accumulate(
        _idx(site), _idx(time), _f64(resid), _idx(sclass), _idx(tclass),
        _f64(sdist), _f64(tdist), int(ns), int(nt),
    )
