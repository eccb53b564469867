# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise kernels. Semantics match ``stlmm._purepy`` exactly."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def fill_cov(const double[:, ::1] rs, const double[:, ::1] rt,
             const cnp.intp_t[::1] sa, const cnp.intp_t[::1] ta,
             const cnp.intp_t[::1] sb, const cnp.intp_t[::1] tb,
             const double[::1] coefs):
    cdef Py_ssize_t na = sa.shape[0], nb = sb.shape[0]
    cdef Py_ssize_t a, b
    cdef cnp.intp_t si, ti, sj, tj
    cdef double ds = coefs[0], is_ = coefs[1], dt = coefs[2], it = coefs[3]
    cdef double prod = coefs[4], a_s = coefs[5], b_s = coefs[6]
    cdef double a_t = coefs[7], b_t = coefs[8], ist = coefs[9]
    cdef double r_s, r_t, same_s, same_t, v
    out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for a in range(na):
            si = sa[a]
            ti = ta[a]
            for b in range(nb):
                sj = sb[b]
                tj = tb[b]
                r_s = rs[si, sj]
                r_t = rt[ti, tj]
                same_s = 1.0 if si == sj else 0.0
                same_t = 1.0 if ti == tj else 0.0
                v = ds * r_s + is_ * same_s + dt * r_t + it * same_t
                v += ist * same_s * same_t
                v += prod * (a_s * r_s + b_s * same_s) * (a_t * r_t + b_t * same_t)
                o[a, b] = v
    return out


def sv_accumulate(const cnp.intp_t[::1] site, const cnp.intp_t[::1] time,
                  const double[::1] resid,
                  const cnp.intp_t[:, ::1] sclass, const cnp.intp_t[:, ::1] tclass,
                  const double[:, ::1] sdist, const double[:, ::1] tdist,
                  Py_ssize_t ns, Py_ssize_t nt):
    cdef Py_ssize_t n = site.shape[0]
    cdef Py_ssize_t a, b
    cdef cnp.intp_t cs, ct, sa_, ta_
    cdef double diff
    sums = np.zeros((ns, nt), dtype=np.float64)
    counts = np.zeros((ns, nt), dtype=np.int64)
    hs = np.zeros((ns, nt), dtype=np.float64)
    ht = np.zeros((ns, nt), dtype=np.float64)
    cdef double[:, ::1] s_v = sums
    cdef cnp.int64_t[:, ::1] c_v = counts
    cdef double[:, ::1] hs_v = hs
    cdef double[:, ::1] ht_v = ht
    with nogil:
        for a in range(n):
            sa_ = site[a]
            ta_ = time[a]
            for b in range(a + 1, n):
                cs = sclass[sa_, site[b]]
                if cs < 0:
                    continue
                ct = tclass[ta_, time[b]]
                if ct < 0:
                    continue
                diff = resid[a] - resid[b]
                s_v[cs, ct] += diff * diff
                c_v[cs, ct] += 1
                hs_v[cs, ct] += sdist[sa_, site[b]]
                ht_v[cs, ct] += tdist[ta_, time[b]]
    return sums, counts, hs, ht
