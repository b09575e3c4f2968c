import warnings

import numpy as np
import pytest

from spdcca.errors import NumericError, ValidationError
from spdcca.fields import SPDCurve, TimeGrid, field_inner, field_norm, log_curve, transport_field
from spdcca.grouplasso import SolverOptions
from spdcca.pipeline import (fit, fit_cv, fit_euclidean, mode_extremes)
from spdcca.simgen import (SimConfig, make_truth, metric_euclid_corr,
                           sample_multivariate, synthesize_curves)

TIGHT = SolverOptions(tol=1e-14, kkt_tol=1e-10)


def small_problem(n=300, p=10, seed=0, contaminate=True, scale_scores=1.0):
    cfg = SimConfig(p=p, k1=min(4, p), d=3, m=3, L=20, N=n, seed=seed)
    truth = make_truth(cfg)
    y, x = sample_multivariate(truth, n, seed + 1)
    curves = synthesize_curves(truth, scale_scores * y, seed + 2,
                               contaminate=contaminate)
    return truth, y, x, curves


def _unit(v):
    return v / np.linalg.norm(v)


class TestFit:
    def test_recovers_planted_pair_at_lambda_zero(self):
        truth, _, x, curves = small_problem(n=1000, p=10, seed=3)
        model = fit(curves, x, d=3, lam=0.0, opts=TIGHT)
        assert model.K >= 2
        for k in range(2):
            theta_align = abs(_unit(truth.thetas[:, k]) @ _unit(model.cca.T[:, k]))
            assert theta_align >= 0.95
            psi_true = truth.canonical_function(k)
            moved = transport_field(model.canonical_functions[k], truth.mu)
            align = abs(field_inner(moved, psi_true))
            align /= field_norm(moved) * field_norm(psi_true)
            assert align >= 0.95

    def test_constant_curves_error(self):
        grid = TimeGrid.regular(-1.0, 1.0, 5)
        c = SPDCurve(grid=grid, values=np.stack([np.eye(2)] * 5))
        with pytest.raises(NumericError):
            fit([c] * 6, np.random.default_rng(0).standard_normal((6, 4)), 1, 0.0)

    def test_deterministic(self):
        truth, _, x, curves = small_problem(n=80, p=8, seed=4)
        m1 = fit(curves, x, d=2, lam=0.01, opts=TIGHT)
        m2 = fit(curves, x, d=2, lam=0.01, opts=TIGHT)
        np.testing.assert_array_equal(m1.cca.T, m2.cca.T)
        np.testing.assert_array_equal(m1.cca.correlations, m2.cca.correlations)

    def test_lambda_above_max_warns_and_returns_k0(self):
        truth, _, x, curves = small_problem(n=60, p=8, seed=5)
        with pytest.warns(UserWarning):
            model = fit(curves, x, d=2, lam=1e6)
        assert model.K == 0

    def test_canonical_functions_reassemble_from_parts(self):
        truth, _, x, curves = small_problem(n=120, p=8, seed=6)
        model = fit(curves, x, d=3, lam=0.0, opts=TIGHT)
        for k in range(model.K):
            rebuilt = sum(model.cca.H[j, k] * model.basis.components[j].values
                          for j in range(3))
            assert np.max(np.abs(rebuilt - model.canonical_functions[k].values)) < 1e-10

    def test_score_projection_orthogonality(self):
        # empirical covariance of <<Log_mu y_i, psi_k>> across k is the identity
        truth, _, x, curves = small_problem(n=150, p=8, seed=7)
        model = fit(curves, x, d=3, lam=0.0, opts=TIGHT)
        mu = model.basis.mean_curve
        proj = np.empty((len(curves), model.K))
        for i, c in enumerate(curves):
            v = log_curve(mu, c)
            for k in range(model.K):
                proj[i, k] = field_inner(v, model.canonical_functions[k])
        centered = proj - proj.mean(axis=0)
        cov = centered.T @ centered / len(curves)
        off = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off)) <= 1e-6

    def test_in_sample_correlation_consistency(self):
        # d = true rank, noiseless data, lambda = 0: in-sample corr near gamma_1
        cfg = SimConfig(N=1000, seed=8)
        truth = make_truth(cfg)
        y, x = sample_multivariate(truth, cfg.N, 9)
        curves = synthesize_curves(truth, y, 10, contaminate=False)
        model = fit(curves, x, d=3, lam=0.0, opts=SolverOptions(kkt_tol=1e-8))
        assert model.cca.correlations[0] >= truth.gammas[0] - 0.05


@pytest.fixture(scope="module")
def fitted():
    truth, _, x, curves = small_problem(n=150, p=8, seed=11)
    return fit(curves, x, d=2, lam=0.0, opts=TIGHT)


class TestModeExtremes:

    def test_small_amplitude_approaches_mean(self, fitted):
        plus, minus = mode_extremes(fitted, 1, 1e-9)
        mu = fitted.basis.mean_curve.values
        assert np.max(np.abs(plus.values - mu)) < 1e-7
        assert np.max(np.abs(minus.values - mu)) < 1e-7

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_outputs_are_spd_curves(self, fitted, c):
        plus, minus = mode_extremes(fitted, 1, c)
        for curve in (plus, minus):
            assert np.all(np.linalg.eigvalsh(curve.values) > 0)

    def test_log_maps_are_exact_negations(self, fitted):
        plus, minus = mode_extremes(fitted, 1, 1.0)
        mu = fitted.basis.mean_curve
        lp = log_curve(mu, plus)
        lm = log_curve(mu, minus)
        assert np.max(np.abs(lp.values + lm.values)) < 1e-10

    def test_out_of_range_k(self, fitted):
        with pytest.raises(ValidationError):
            mode_extremes(fitted, fitted.K + 1, 1.0)


class TestFitEuclidean:
    def test_small_variation_matches_riemannian(self):
        # small tangent amplitudes: flat-space and tangent fits nearly agree
        truth, y, x, curves = small_problem(n=1200, p=10, seed=12,
                                            contaminate=False, scale_scores=0.1)
        riem = fit(curves, x, d=3, lam=0.0, opts=TIGHT)
        eucl = fit_euclidean(curves, x, d=3, lam=0.0, opts=TIGHT)
        assert abs(riem.cca.correlations[0] - eucl.cca.correlations[0]) <= 0.05

    def test_metric_e_evaluable(self):
        truth, y, x, curves = small_problem(n=200, p=8, seed=13)
        model = fit_euclidean(curves, x, d=3, lam=0.0, opts=TIGHT)
        val = metric_euclid_corr(curves, x, model.canonical_functions[0],
                                 model.cca.T[:, 0], model.grid)
        assert -1.0 <= val <= 1.0

    def test_deterministic(self):
        truth, _, x, curves = small_problem(n=90, p=8, seed=14)
        m1 = fit_euclidean(curves, x, d=2, lam=0.01, opts=TIGHT)
        m2 = fit_euclidean(curves, x, d=2, lam=0.01, opts=TIGHT)
        np.testing.assert_array_equal(m1.cca.T, m2.cca.T)
        np.testing.assert_array_equal(m1.canonical_functions, m2.canonical_functions)


class TestFitCV:
    def test_single_element_grids(self):
        truth, _, x, curves = small_problem(n=80, p=8, seed=15)
        res = fit_cv(curves, x, d_grid=[2], lambda_grid=np.array([0.05]),
                     folds=3, seed=0, opts=TIGHT)
        assert res.d == 2
        assert res.lam == 0.05
        assert len(res.table) == 1

    def test_table_shape(self):
        truth, _, x, curves = small_problem(n=80, p=8, seed=16)
        lams = np.geomspace(0.5, 0.01, 7)
        res = fit_cv(curves, x, d_grid=[1, 2, 3], lambda_grid=lams,
                     folds=3, seed=0, opts=TIGHT)
        assert len(res.table) == 3 * 7

    def test_rank_selection_trend(self):
        # true rank 3 plus one contamination mode: scree picks 3 or 4
        chosen = []
        opts = SolverOptions(kkt_tol=1e-7)
        for seed in range(15):
            cfg = SimConfig(p=50, k1=10, N=400, seed=seed)
            truth = make_truth(cfg)
            y, x = sample_multivariate(truth, cfg.N, seed + 500)
            curves = synthesize_curves(truth, y, seed + 900)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = fit_cv(curves, x, d_grid=[1, 2, 3, 4, 5], folds=4,
                             seed=seed, opts=opts, n_lambdas=25,
                             lambda_min_ratio=0.01)
            chosen.append(res.d)
        assert sum(c in (3, 4) for c in chosen) >= 12
