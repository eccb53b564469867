import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stlmm.covariance import (
    ClassicPS, StDesign, ThetaPS, classic_to_lmm, cross_cov, dense_cov, dense_cov_ps, dense_cov_sep,
    lag_covariance, recover_components, theoretical_sv,
)
from stlmm.kernels import CorrelationModel

from conftest import TABLE2, make_design, oracle_parts, oracle_sigma, ps_theta, sep_theta


class TestDesign:
    def test_canonical_order(self):
        d = make_design(4, 3)
        assert d.cell(2, 1) == 6
        assert d.site_of(6) == 2 and d.time_of(6) == 1
        assert d.n_o + d.n_u == 12

    def test_validation(self):
        with pytest.raises(ValueError, match="mask"):
            StDesign(np.zeros((2, 2)) + [[0, 0], [1, 1]], [1.0, 2.0], np.ones(3, bool))
        with pytest.raises(ValueError, match="observed"):
            StDesign([[0, 0], [1, 1]], [1.0], np.zeros(2, bool))
        with pytest.raises(ValueError, match="distinct"):
            StDesign([[0, 0]], [1.0, 1.0])

    def test_duplicate_sites_warn(self):
        with pytest.warns(RuntimeWarning):
            StDesign([[0, 0], [0, 0]], [1.0])

    def test_read_only(self):
        d = make_design(2, 2)
        with pytest.raises(ValueError):
            d.sites[0, 0] = 9.0

    def test_extend_keeps_labels(self):
        d = make_design(3, 2, missing=0.0).with_observed([1, 0, 1, 1, 1, 0])
        e = d.extend(new_sites=[[9.0, 9.0]], new_times=[3.0])
        assert (e.S, e.T) == (4, 3)
        assert e.observed[e.cell(1, 0)] == d.observed[d.cell(1, 0)]
        assert e.observed[e.cell(2, 1)] == d.observed[d.cell(2, 1)]
        assert not e.observed[e.cell(3, 0)] and not e.observed[e.cell(0, 2)]


class TestThetaTypes:
    def test_ps_invariants(self):
        with pytest.raises(ValueError):
            ps_theta((0, 0, 0, 0, 0, 0))
        with pytest.raises(ValueError):
            ps_theta((1, -1, 0, 0, 0, 0))

    def test_sep_invariants(self):
        with pytest.raises(ValueError):
            sep_theta(total=0.0)
        with pytest.raises(ValueError):
            sep_theta(v_s=1.5)

    def test_classic_weights(self):
        with pytest.raises(ValueError):
            ClassicPS.from_weights(0, 1, 1, 1, 0, 1, 0, CorrelationModel("exponential", 1), CorrelationModel("exponential", 1))


def test_single_cell_stacks_all_components():
    d = StDesign([[0.0, 0.0]], [1.0])
    np.testing.assert_allclose(dense_cov_ps(ps_theta((1, 1, 1, 1, 1, 1)), d), [[6.0]])


def test_same_site_two_times_hand_value():
    # R_t(1) = 0.5 with an exponential range of 3 / ln 2
    th = ThetaPS(0, 0, 0, 0, 1, 1, CorrelationModel("exponential", 1.0), CorrelationModel("exponential", 3 / np.log(2)))
    d = StDesign([[0.0, 0.0]], [1.0, 2.0])
    np.testing.assert_allclose(dense_cov_ps(th, d), [[2.0, 0.5], [0.5, 2.0]], atol=1e-15)


@pytest.mark.parametrize("vc", list(TABLE2))
@pytest.mark.parametrize("missing", [0.0, 0.25])
def test_ps_matches_incidence_oracle(vc, missing):
    d = make_design(5, 4, missing, seed=3)
    th = ps_theta(TABLE2[vc])
    assert np.max(np.abs(dense_cov(th, d) - oracle_sigma(th, d))) <= 1e-14 * th.total


@pytest.mark.parametrize("seed", range(3))
def test_sep_matches_kronecker_oracle(seed):
    rng = np.random.default_rng(seed)
    d = make_design(2, 2, seed=seed)
    th = sep_theta(rng.uniform(1, 5), rng.uniform(), rng.uniform(), rng.uniform(0.5, 3), rng.uniform(0.5, 3))
    assert np.max(np.abs(dense_cov_sep(th, d) - oracle_sigma(th, d))) <= 1e-14 * th.total


def test_sep_limits():
    d = make_design(3, 3, missing=0.2, seed=1)
    th0 = sep_theta(2.0, 0.0, 0.0)
    rs, rt, _, _ = oracle_parts(th0, d)
    idx = d.obs_index
    np.testing.assert_allclose(dense_cov_sep(th0, d), 2.0 * np.kron(rt, rs)[np.ix_(idx, idx)], atol=1e-15)
    np.testing.assert_allclose(dense_cov_sep(sep_theta(2.0, 1.0, 1.0), d), 2.0 * np.eye(d.n_o), atol=1e-15)


def test_type_checks():
    d = make_design(2, 2)
    with pytest.raises(TypeError):
        dense_cov_ps(sep_theta(), d)
    with pytest.raises(TypeError):
        dense_cov_sep(ps_theta(TABLE2["VC1"]), d)


def test_classic_mapping():
    k = CorrelationModel("exponential", 1.0)
    c = ClassicPS(10, 0.2, 5, 0.4, 3, k, k)
    np.testing.assert_allclose(classic_to_lmm(c).variances, [8, 2, 3, 2, 3, 0])
    assert classic_to_lmm(ClassicPS(10, 0, 5, 0, 3, k, k)).sig2_gamma == 0
    np.testing.assert_allclose(classic_to_lmm(ClassicPS(0, 0.3, 0, 0.3, 3, k, k)).variances, [0, 0, 0, 0, 3, 0])


def test_classic_from_weights():
    k = CorrelationModel("exponential", 1.0)
    c = ClassicPS.from_weights(2, 3, 4, 5, 0.1, 6, 0.2, k, k)
    assert (c.sig2_s, c.sig2_t, c.sig2_st) == (15, 24, 60)


@pytest.mark.parametrize("seed", range(3))
def test_classic_equals_direct_product_sum(seed):
    rng = np.random.default_rng(seed)
    S, T = 4, 5
    d = make_design(S, T, seed=seed)
    sp, tp = CorrelationModel("exponential", 2.0), CorrelationModel("exponential", 4.0)
    c = ClassicPS(*rng.uniform(0.5, 3, 1), rng.uniform(), *rng.uniform(0.5, 3, 1), rng.uniform(), rng.uniform(0.5, 3), sp, tp)
    rs, rt, zs, zt = oracle_parts(classic_to_lmm(c), d)
    cs = (1 - c.v_s) * rs + c.v_s * np.eye(S)
    ct = (1 - c.v_t) * rt + c.v_t * np.eye(T)
    direct = c.sig2_s * zs @ cs @ zs.T + c.sig2_t * zt @ ct @ zt.T + c.sig2_st * np.kron(rt, rs)
    assert np.max(np.abs(dense_cov(classic_to_lmm(c), d) - direct)) <= 1e-14 * np.abs(direct).max()


class TestSemivariogram:
    def test_origin_and_infinity(self):
        th = ps_theta(TABLE2["VC2"])
        assert theoretical_sv(th, 0.0, 0.0) == 0.0
        assert theoretical_sv(th, 1e9, 1e9) == pytest.approx(60.0, abs=1e-9)

    def test_spatial_dependent_limit(self):
        th = ps_theta(TABLE2["VC2"])
        inf = 1e8 * 9.0
        assert theoretical_sv(th, inf, inf) - theoretical_sv(th, 1e-9 * 2.25, inf) == pytest.approx(16.0, abs=1e-6)

    def test_lag_covariance_nuggets(self):
        th = ps_theta((1, 2, 3, 4, 5, 6))
        assert lag_covariance(th, 0.0, 0.0) == pytest.approx(21.0)
        assert lag_covariance(th, 0.0, 1e12) == pytest.approx(3.0)  # delta + gamma
        assert lag_covariance(th, 1e12, 0.0) == pytest.approx(7.0)  # tau + eta

    def test_sep_lag_covariance(self):
        th = sep_theta(4.0, 0.25, 0.5)
        assert lag_covariance(th, 0.0, 0.0) == pytest.approx(4.0)
        assert lag_covariance(th, 1e12, 0.0) == pytest.approx(0.0)

    @pytest.mark.parametrize("vc", list(TABLE2))
    def test_recover_table2(self, vc):
        rec = recover_components(ps_theta(TABLE2[vc]))
        assert np.max(np.abs(rec.variances - TABLE2[vc])) <= 1e-6

    def test_recover_pure_nugget(self):
        np.testing.assert_allclose(recover_components(ps_theta((0, 0, 0, 0, 0, 1))).variances, [0, 0, 0, 0, 0, 1], atol=1e-12)


positive = st.floats(min_value=0.0, max_value=50.0)


@pytest.mark.property
@settings(max_examples=40, deadline=None)
@given(
    # only the interaction and cell-level terms have full rank on the grid
    st.tuples(positive, positive, positive, positive, positive, positive).filter(lambda v: v[4] + v[5] > 0.1),
    st.integers(2, 10), st.integers(2, 8), st.sampled_from(["exponential", "spherical"]),
    st.integers(0, 2**32 - 1),
)
def test_ps_positive_definite(v, S, T, kind, seed):
    th = ps_theta(v, kind=kind)
    d = make_design(S, T, missing=0.1, seed=seed)
    sig = dense_cov(th, d)
    np.testing.assert_array_equal(sig, sig.T)
    assert np.all(np.diag(np.linalg.cholesky(sig)) > 0)


@pytest.mark.property
@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.1, 50), st.floats(0.0, 0.99), st.floats(0.0, 0.99),
    st.integers(2, 10), st.integers(2, 8), st.integers(0, 2**32 - 1),
)
def test_sep_positive_definite(total, vs, vt, S, T, seed):
    d = make_design(S, T, missing=0.1, seed=seed)
    sig = dense_cov(sep_theta(total, vs, vt), d)
    assert np.all(np.diag(np.linalg.cholesky(sig)) > 0)


@pytest.mark.property
@settings(max_examples=30, deadline=None)
@given(st.sampled_from(list(TABLE2)), st.integers(0, 2**32 - 1))
def test_permutation_invariance(vc, seed):
    rng = np.random.default_rng(seed)
    th = ps_theta(TABLE2[vc])
    d = make_design(5, 4, missing=0.2, seed=seed)
    cells = d.obs_index
    perm = rng.permutation(cells.size)
    base = cross_cov(th, d, cells, cells)
    permuted = cross_cov(th, d, cells[perm], cells[perm])
    np.testing.assert_array_equal(permuted, base[np.ix_(perm, perm)])


@pytest.mark.property
@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.floats(0.0, 100.0)] * 6).filter(lambda v: sum(v) > 1e-3), st.floats(0.1, 1e3), st.floats(0.1, 1e3))
def test_recover_roundtrip(v, kappa, phi):
    th = ps_theta(v, kappa, phi)
    rec = recover_components(th)
    assert np.max(np.abs(rec.variances - th.variances)) <= 1e-6 * max(th.total, 1.0)
