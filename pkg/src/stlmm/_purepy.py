"""Numpy implementations of the pairwise kernels in ``_speedups.pyx``."""
import numpy as np

# rows per block when expanding pair lists; bounds peak memory
_BLOCK = 256


def fill_cov(rs, rt, sa, ta, sb, tb, coefs):
    ds, is_, dt, it, prod, a_s, b_s, a_t, b_t, ist = (float(c) for c in coefs)
    r_s = rs[np.ix_(sa, sb)]
    r_t = rt[np.ix_(ta, tb)]
    same_s = (sa[:, None] == sb[None, :]).astype(float)
    same_t = (ta[:, None] == tb[None, :]).astype(float)
    out = ds * r_s + is_ * same_s + dt * r_t + it * same_t
    out += ist * same_s * same_t
    if prod != 0.0:
        out += prod * (a_s * r_s + b_s * same_s) * (a_t * r_t + b_t * same_t)
    return out


def sv_accumulate(site, time, resid, sclass, tclass, sdist, tdist, ns, nt):
    n = site.shape[0]
    sums = np.zeros(ns * nt)
    counts = np.zeros(ns * nt, dtype=np.int64)
    hs = np.zeros(ns * nt)
    ht = np.zeros(ns * nt)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        a = np.arange(start, stop)[:, None]
        b = np.arange(n)[None, :]
        keep = b > a
        ai, bi = np.broadcast_to(a, keep.shape)[keep], np.broadcast_to(b, keep.shape)[keep]
        sa, sb, ta, tb = site[ai], site[bi], time[ai], time[bi]
        cs = sclass[sa, sb]
        ct = tclass[ta, tb]
        ok = (cs >= 0) & (ct >= 0)
        if not ok.any():
            continue
        flat = cs[ok] * nt + ct[ok]
        d = resid[ai[ok]] - resid[bi[ok]]
        sums += np.bincount(flat, weights=d * d, minlength=ns * nt)
        counts += np.bincount(flat, minlength=ns * nt)
        hs += np.bincount(flat, weights=sdist[sa[ok], sb[ok]], minlength=ns * nt)
        ht += np.bincount(flat, weights=tdist[ta[ok], tb[ok]], minlength=ns * nt)
    shape = (ns, nt)
    return sums.reshape(shape), counts.reshape(shape), hs.reshape(shape), ht.reshape(shape)
