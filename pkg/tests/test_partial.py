import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from partialcov.errors import BudgetError, ConfigurationError, SingularMatrixError
from partialcov.estimators import ToeplitzModel, burg_multisegment, reverse_levinson, scm
from partialcov.numerics import log_det, pd_inverse, quad_form, scale_bias
from partialcov.partial import (
    CG,
    GAUSSIAN,
    PartialConfig,
    WeightFunction,
    cg_cov,
    exact_partial_oracle,
    gaussian_loglik,
    huber_weight,
    n_selected,
    p_bt,
    p_tyler,
    partial_burg,
    partial_scm,
    partial_wrap,
    pcg_batch,
    pcg_cov,
    pm_est,
    pm_exp_batch,
    pm_exp_cov,
    pm_of,
    pscm_batch,
    pm_est_batch,
    ptyler_batch,
    select_partial,
    tyler_weight,
)
from partialcov.simulation import gen_noise, gen_target, ramp_steering

from conftest import cn

AR1 = np.array([0.7] + [0.0] * 6)


def scm_key(X, S):
    return quad_form(X, pd_inverse(S))


def unit_det(inv):
    d = inv.shape[-1]
    return inv * np.exp(-log_det(inv) / d)


def rel_fro(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


class TestSelection:
    def test_examples(self):
        assert select_partial([5, 1, 3, 2], 0.5).tolist() == [1, 3]
        assert select_partial([5, 1, 3, 2], 1.0).tolist() == [0, 1, 2, 3]
        # ceil(0.34 * 3) = 2, tie broken by index
        assert select_partial([1, 1, 2], 0.34).tolist() == [0, 1]

    def test_count_rounding(self):
        assert n_selected(10, 0.7) == 7
        assert n_selected(22, 0.75) == 17
        assert n_selected(3, 0.01) == 1
        with pytest.raises(ConfigurationError):
            n_selected(3, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.floats(0.01, 1.0))
    def test_selects_smallest_keys(self, keys, p):
        sel = select_partial(keys, p)
        keys = np.asarray(keys)
        assert sel.size == n_selected(keys.size, p)
        assert np.all(np.diff(sel) > 0)
        rest = np.setdiff1d(np.arange(keys.size), sel)
        if rest.size:
            assert keys[sel].max() <= keys[rest].min()

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            PartialConfig(p=1.5)
        with pytest.raises(ConfigurationError):
            PartialConfig(k_max=0)
        with pytest.raises(ConfigurationError):
            PartialConfig(ordering_mode="sorted")
        with pytest.raises(ConfigurationError):
            partial_scm(np.eye(4)[:3], PartialConfig(p=0.5))


class TestWrap:
    def test_full_order_is_one_base_call(self, rng):
        X = cn(rng, (10, 3))
        calls = []

        def base(Y):
            calls.append(len(Y))
            return scm(Y)

        r = partial_wrap(base, scm_key, X, PartialConfig(p=1.0))
        assert r.converged and r.iterations == 1 and calls == [10]
        np.testing.assert_array_equal(r.matrix, scm(X))

    def test_gross_outlier_excluded(self, rng):
        X = cn(rng, (12, 2))
        X[5] *= 1e3
        r = partial_wrap(scm, scm_key, X, PartialConfig(p=11 / 12))
        assert 5 not in r.selected
        # the identity ordering already drops the outlier; the first refit confirms it
        assert r.converged and r.iterations == 1
        np.testing.assert_allclose(r.matrix, scm(np.delete(X, 5, axis=0)))

    def test_cycling_guard(self):
        # selecting the least likely samples alternates between two subsets on this batch
        X = np.array([[-1.7, -1.3], [-1.4, -0.4], [-2.3, -0.2], [-1.0, 0.9]])
        r = partial_wrap(scm, lambda X, S: -scm_key(X, S), X, PartialConfig(p=0.5, k_max=9))
        assert not r.converged and r.iterations == 9
        h = r.history
        assert not np.allclose(h[-1], h[-2])
        np.testing.assert_allclose(h[-1], h[-3])

    def test_failure_reports_iteration(self):
        X = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
        with pytest.raises(SingularMatrixError, match="iteration 1"):
            partial_wrap(scm, scm_key, X, PartialConfig(p=0.6))


class TestPartialSCM:
    def test_full_order(self, rng):
        X = cn(rng, (15, 4))
        np.testing.assert_array_equal(partial_scm(X, PartialConfig(p=1.0)).matrix, scm(X))

    def test_matches_generic_wrapper(self, rng):
        X = cn(rng, (22, 4))
        X[:2] *= 5
        cfg = PartialConfig(p=0.75)
        a, b = partial_scm(X, cfg), partial_wrap(scm, scm_key, X, cfg)
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)
        assert a.iterations == b.iterations

    def test_bias_oracle(self):
        rng = np.random.default_rng(0)
        X = cn(rng, (200, 22, 8))
        res = pscm_batch(X, PartialConfig(p=0.75))
        ratio = np.mean(np.real(np.trace(res.matrix, axis1=1, axis2=2))) / 8
        p_eff = 17 / 22
        assert ratio == pytest.approx(scale_bias(8, 2, p_eff) / p_eff, rel=0.02)

    def test_bias_correction_flag(self, rng):
        X = cn(rng, (22, 8))
        cfg = PartialConfig(p=0.75)
        raw, cor = partial_scm(X, cfg), partial_scm(X, cfg, bias_correct=True)
        factor = (17 / 22) / scale_bias(8, 2, 17 / 22)
        assert cor.bias_factor == pytest.approx(factor)
        np.testing.assert_allclose(cor.matrix, raw.matrix * factor)

    def test_scales_quadratically(self, rng):
        X = cn(rng, (22, 4))
        cfg = PartialConfig(p=0.75)
        np.testing.assert_allclose(partial_scm(3 * X, cfg).matrix,
                                   9 * partial_scm(X, cfg).matrix, rtol=1e-12)

    def test_ordering_mode_same_fixed_points(self, rng):
        X = cn(rng, (22, 4))
        X[:3] *= 4
        a = partial_scm(X, PartialConfig(p=0.75))
        b = partial_scm(X, PartialConfig(p=0.75, ordering_mode="order"))
        assert b.iterations >= a.iterations
        np.testing.assert_array_equal(a.selected, b.selected)


class TestPartialBurg:
    def test_white(self, rng):
        r = partial_burg(cn(rng, (5000, 4)), PartialConfig(p=1.0))
        assert np.all(np.abs(r.model.mu) < 0.05)
        np.testing.assert_allclose(r.matrix, np.eye(4) / r.model.sigma2, atol=0.1)

    def test_full_order_matches_burg(self, rng):
        X = gen_noise(6, 30, AR1[:5], rng)
        r = partial_burg(X, PartialConfig(p=1.0))
        m = burg_multisegment(X)
        np.testing.assert_allclose(r.model.mu, m.mu, atol=1e-12)
        # the only difference is the maximum-likelihood rescale of sigma2
        R_inv = np.linalg.inv(reverse_levinson(ToeplitzModel(1.0, m.mu)))
        scale = np.mean(quad_form(X, R_inv)) / 6
        assert r.model.sigma2 == pytest.approx(scale, rel=1e-10)

    def test_bias_uses_doubled_dimension(self, rng):
        X = cn(rng, (22, 8))
        r = partial_burg(X, PartialConfig(p=0.75), bias_correct=True)
        assert r.bias_factor == pytest.approx((17 / 22) / scale_bias(16, 1, 17 / 22))

    def test_contamination(self):
        rng = np.random.default_rng(1)
        wins = 0
        for _ in range(200):
            X = gen_noise(8, 22, AR1, rng)
            X[:3] += 10 * cn(rng, (3, 8))
            err_p = abs(partial_burg(X, PartialConfig(p=0.75)).model.mu[0] - 0.7)
            err_b = abs(burg_multisegment(X).mu[0] - 0.7)
            wins += err_p < err_b
        assert wins >= 0.9 * 200


def tyler_residual(X, inv, p):
    """One more pTyler step from ``inv``: (selection unchanged?, criterion)."""
    tau = quad_form(X, inv)
    sel = select_partial(tau, p)
    S = scm(X[sel] / np.sqrt(tau[sel])[:, None])
    R = S / np.real(np.trace(S))
    R_inv = pd_inverse(R)
    moved = inv @ R - np.eye(len(R))
    crit = np.real(np.trace(moved @ moved))
    return np.array_equal(select_partial(quad_form(X, R_inv), p), sel), crit


class TestPartialTyler:
    def test_analytic_fixed_point(self):
        X = np.array([[1.0, 0.0], [0.0, 3.0]], dtype=complex)
        r = p_tyler(X, PartialConfig(p=1.0))
        np.testing.assert_allclose(r.covariance(), 0.5 * np.eye(2), atol=1e-12)

    def test_scale_invariance(self, rng):
        X = cn(rng, (22, 6))
        cfg = PartialConfig(p=0.75)
        np.testing.assert_allclose(p_tyler(1e6 * X, cfg).matrix, p_tyler(X, cfg).matrix,
                                   rtol=1e-10)

    def test_fixed_point_certificate(self):
        rng = np.random.default_rng(2)
        cfg = PartialConfig(p=0.75, epsilon=1e-10)
        for _ in range(50):
            X = cn(rng, (22, 6))
            X[:3] *= 6
            r = p_tyler(X, cfg)
            assert r.converged
            same, crit = tyler_residual(X, r.matrix, cfg.p)
            assert same and crit <= cfg.epsilon

    def test_return_updated(self, rng):
        X = cn(rng, (22, 4))
        cfg = PartialConfig(p=0.75, epsilon=1e-12)
        a = p_tyler(X, cfg).matrix
        b = p_tyler(X, cfg, return_updated=True).matrix
        assert rel_fro(a, b) < 1e-5

    def test_zero_sample_rejected(self, rng):
        X = cn(rng, (10, 3))
        X[4] = 0
        with pytest.raises(SingularMatrixError):
            p_tyler(X, PartialConfig(p=0.75))


def sinr_loss(inv, R, s):
    w = inv @ s
    opt = np.real(np.vdot(s, np.linalg.solve(R, s)))
    return abs(np.vdot(s, w)) ** 2 / (opt * np.real(np.vdot(w, R @ w)))


class TestPartialBT:
    def test_white(self, rng):
        r = p_bt(cn(rng, (10000, 4)), PartialConfig(p=1.0))
        assert np.all(np.abs(r.model.mu) < 0.05)

    def test_scale_invariance(self, rng):
        X = cn(rng, (22, 6))
        cfg = PartialConfig(p=0.75)
        np.testing.assert_allclose(p_bt(1e-4 * X, cfg).matrix, p_bt(X, cfg).matrix, rtol=1e-10)

    def test_beats_tyler_on_stationary_data(self):
        # pilot: pBT has the higher SINR loss factor on 200/200 seeds
        rng = np.random.default_rng(0)
        d = 8
        R = reverse_levinson(ToeplitzModel(1.0, AR1))
        s = ramp_steering(d)
        X = gen_noise(d, 22, AR1, rng, (200,))
        X[:, :3] += gen_target(s, 20.0, rng, (200, 3))
        cfg = PartialConfig(p=0.75, epsilon=1e-8)
        bt = [p_bt(x, cfg).matrix for x in X]
        ty = [p_tyler(x, cfg).matrix for x in X]
        wins = np.mean([sinr_loss(a, R, s) > sinr_loss(b, R, s) for a, b in zip(bt, ty)])
        assert wins >= 0.70


class TestMEstimators:
    def test_gaussian_weight_is_pscm(self, rng):
        X = cn(rng, (3, 22, 4))
        X[:, :2] *= 5
        cfg = PartialConfig(p=0.75)
        a = pm_est_batch(X, GAUSSIAN, cfg, record=True)
        b = pscm_batch(X, cfg, record=True)
        for ha, hb in zip(a.history, b.history):
            np.testing.assert_array_equal(ha, hb)

    def test_tyler_weight_matches_ptyler(self, rng):
        X = cn(rng, (22, 4))
        X[:3] *= 5
        cfg = PartialConfig(p=0.75, k_max=500, epsilon=1e-14)
        a = pm_est(tyler_weight(4), X, cfg)
        b = p_tyler(X, cfg)
        assert a.converged and b.converged
        assert rel_fro(unit_det(a.matrix), unit_det(b.matrix)) < 1e-6

    def test_huber_consistency(self):
        d, T = 4, 8.0

        # fixed point of min(1, T/t) weighting on gaussian data is beta * C
        def excess(b):
            m = integrate.quad(lambda t: min(t, T * b) * stats.gamma.pdf(t, d), 0, np.inf)[0]
            return m - d * b

        beta = optimize.brentq(excess, 1e-3, 1.0)
        mu = np.array([0.5, 0.2, -0.1])
        C = reverse_levinson(ToeplitzModel(1.0, mu))
        X = gen_noise(d, 1000, mu, np.random.default_rng(0))
        r = pm_est(huber_weight(T), X, PartialConfig(p=1.0, k_max=200, epsilon=1e-12))
        assert r.converged
        assert rel_fro(r.covariance() / beta, C) < 0.10

    def test_negative_weight_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            pm_est(CG, cn(rng, (10, 2)), PartialConfig(p=0.75))

    def test_pm_of_scm_equals_pm_est(self, rng):
        X = cn(rng, (22, 4))
        X[:3] *= 5
        cfg = PartialConfig(p=0.75)
        w = huber_weight(6.0)
        np.testing.assert_allclose(pm_of(w, scm, X, cfg).matrix, pm_est(w, X, cfg).matrix,
                                   rtol=1e-10)
        np.testing.assert_allclose(pm_of(GAUSSIAN, scm, X, PartialConfig(p=1.0)).covariance(),
                                   scm(X), rtol=1e-10)

    def test_pm_of_burg_matches_pbt(self):
        R = reverse_levinson(ToeplitzModel(1.0, AR1))
        X = gen_noise(8, 200, AR1, np.random.default_rng(0))
        cfg = PartialConfig(p=0.75, k_max=200, epsilon=1e-10)
        a = pm_of(tyler_weight(8), lambda Y: reverse_levinson(burg_multisegment(Y)), X, cfg)
        b = p_bt(X, cfg)
        ra = np.real(np.trace(unit_det(a.matrix) @ R))
        rb = np.real(np.trace(unit_det(b.matrix) @ R))
        assert ra == pytest.approx(rb, rel=0.05)


class TestGeodesic:
    def test_fixed_point_unchanged(self, rng):
        # if S(Sigma) = Sigma the update is exp(0) = I
        X = np.sqrt(3) * np.eye(3, dtype=complex)
        r = pm_exp_cov(GAUSSIAN, X, PartialConfig(p=1.0, k_max=1))
        res = pm_exp_batch(X[None], GAUSSIAN, PartialConfig(p=1.0, k_max=1))
        assert res.converged[0]
        np.testing.assert_allclose(r.covariance(), np.eye(3), atol=1e-12)

    def test_gaussian_loss_gives_scm(self, rng):
        X = cn(rng, (40, 4))
        r = pm_exp_cov(GAUSSIAN, X, PartialConfig(p=1.0, k_max=500, epsilon=1e-20))
        assert rel_fro(r.covariance(), scm(X)) < 1e-6

    def test_negative_weights_keep_pd(self, rng):
        X = cn(rng, (20, 3))
        X[0] *= 0.1
        r = pm_exp_cov(CG, X, PartialConfig(p=0.75), record=True)
        assert quad_form(X[0], np.eye(3)) < 0.5
        assert all(np.linalg.eigvalsh(h).min() > 0 for h in r.history)

    def test_pcg_consistency(self):
        mu = np.array([0.5, 0.2, -0.1])
        C = reverse_levinson(ToeplitzModel(1.0, mu))
        X = gen_noise(4, 10000, mu, np.random.default_rng(5))
        r = cg_cov(X, PartialConfig())
        assert r.converged
        assert rel_fro(r.covariance(), C) < 0.05

    def test_cg_normalization(self):
        rng = np.random.default_rng(6)
        X = cn(rng, (100000, 4))
        tau = np.sum(np.abs(X) ** 2, axis=1)
        S = (X.T * (1 - 0.5 / tau)) @ X.conj() / len(X) / (1 - 1 / 8)
        np.testing.assert_allclose(S, np.eye(4), atol=0.02)

    def test_pcg_iterates_pd(self, rng):
        X = cn(rng, (22, 8))
        X[:3] *= 10
        r = pcg_cov(X, PartialConfig(p=0.75), record=True)
        assert all(np.linalg.eigvalsh(h).min() > 0 for h in r.history)

    def test_pcg_prefers_small_tau(self):
        # the ascending-loss selection keeps the low-energy samples on clean data;
        # its accuracy against the reversed ordering is reported, not asserted
        rng = np.random.default_rng(7)
        X = cn(rng, (200, 22, 8))
        cfg = PartialConfig(p=0.75)
        asc = pcg_batch(X, cfg)
        rev = WeightFunction(g_prime=CG.g_prime, g=lambda t: -CG.g(t), name="reversed")
        desc = pm_exp_batch(X, rev, cfg, init_scm=True, normalization=1 / (1 - 1 / 16))
        sel = [select_partial(CG.g(quad_form(x, m @ m)), 0.75) for x, m in zip(X, asc.matrix)]
        energy = np.sum(np.abs(X) ** 2, axis=-1)
        kept = np.mean([energy[i, s].mean() for i, s in enumerate(sel)])
        assert kept < energy.mean()

        def err(res):
            inv = res.inverse()
            return np.array([rel_fro(unit_det(m), np.eye(8)) for m in inv])

        e_asc, e_desc = np.mean(err(asc)), np.mean(err(desc))
        if e_asc > e_desc:
            warnings.warn(f"pcg_cov ascending-g ordering is less accurate than the reversed "
                          f"ordering on clean data ({e_asc:.3f} vs {e_desc:.3f})")


def fixed_outlier_batch(rng, steer):
    X = cn(rng, (8, 2))
    X[0] += 10 * np.exp(2j * np.pi * rng.uniform()) * steer
    return X


class TestOracle:
    def test_single_subset(self, rng):
        X = cn(rng, (3, 2))
        idx, theta, _ = exact_partial_oracle(scm, gaussian_loglik, X, 1.0)
        assert idx.tolist() == [0, 1, 2]
        np.testing.assert_array_equal(theta, scm(X))

    def test_budget(self, rng):
        with pytest.raises(BudgetError):
            exact_partial_oracle(scm, gaussian_loglik, cn(rng, (30, 2)), 0.5, budget=1000)

    def test_dominance(self):
        rng = np.random.default_rng(8)
        steer = np.exp(1j * np.pi * 0.5 * np.arange(2)) / np.sqrt(2)
        cfg = PartialConfig(p=0.75)
        for _ in range(30):
            X = fixed_outlier_batch(rng, steer)
            r = partial_scm(X, cfg)
            _, _, value = exact_partial_oracle(scm, gaussian_loglik, X, 0.75)
            assert value >= r.partial_loglik - 1e-12


class TestInvariants:
    @pytest.mark.parametrize("fn", [partial_scm, p_tyler, p_bt, pcg_cov])
    def test_permutation(self, fn, rng):
        X = cn(rng, (22, 4))
        X[:3] *= 5
        perm = rng.permutation(22)
        cfg = PartialConfig(p=0.75)
        a, b = fn(X, cfg), fn(X[perm], cfg)
        np.testing.assert_allclose(a.matrix, b.matrix, rtol=1e-8, atol=1e-12)
        np.testing.assert_array_equal(np.sort(perm[b.selected]), a.selected)

    @pytest.mark.parametrize("fn", [partial_scm, partial_burg, p_tyler, p_bt, pcg_cov])
    def test_selection_is_smallest_keys(self, fn, rng):
        X = cn(rng, (22, 4))
        X[:3] *= 5
        r = fn(X, PartialConfig(p=0.75))
        tau = quad_form(X, r.inverse())
        keys = CG.g(tau) if fn is pcg_cov else tau
        np.testing.assert_array_equal(r.selected, select_partial(keys, 0.75))

    def test_ptyler_batch_matches_single(self, rng):
        X = cn(rng, (5, 22, 4))
        res = ptyler_batch(X, PartialConfig(p=0.75))
        for b in range(5):
            np.testing.assert_allclose(res.matrix[b], p_tyler(X[b], PartialConfig(p=0.75)).matrix,
                                       rtol=1e-12)
