import numpy as np
import pytest

from spdcca.cca import classical_cca
from spdcca.errors import NumericError, ValidationError
from spdcca.fields import TangentField, field_inner, field_norm
from spdcca.simgen import (SimConfig, TRIALS_HEADER, joint_covariance,
                           make_truth, metric_euclid_corr, metric_f1,
                           metric_norm_error, metric_pt_error,
                           metric_tangent_corr, run_trials,
                           sample_multivariate, synthesize_curves)


@pytest.fixture(scope="module")
def truth():
    return make_truth(SimConfig(seed=0))


class TestMakeTruth:
    def test_eta_constraint(self, truth):
        gram = truth.etas.T @ truth.sigma_y @ truth.etas
        np.testing.assert_allclose(gram, np.eye(2), atol=1e-10)

    def test_theta_constraint(self, truth):
        gram = truth.thetas.T @ truth.sigma_x @ truth.thetas
        np.testing.assert_allclose(gram, np.eye(2), atol=1e-10)

    def test_support_size_and_shared_pattern(self, truth):
        assert truth.support.size == 20
        nz = np.abs(truth.thetas) > 0
        assert np.array_equal(np.nonzero(nz[:, 0])[0], truth.support)
        assert np.array_equal(np.nonzero(nz[:, 1])[0], truth.support)

    def test_component_orthonormality(self, truth):
        n_modes = len(truth.phis)
        gram = np.array([
            [field_inner(truth.phis[a], truth.phis[b]) for b in range(n_modes)]
            for a in range(n_modes)
        ])
        assert np.max(np.abs(gram - np.eye(n_modes))) <= 1e-8

    def test_sigma_y_is_counting_diagonal(self, truth):
        np.testing.assert_array_equal(truth.sigma_y, np.diag([3.0, 2.0, 1.0]))

    def test_invalid_config_rejected(self):
        with pytest.raises(ValidationError):
            SimConfig(d=5, p=3)
        with pytest.raises(ValidationError):
            SimConfig(gamma=(0.9,))


class TestSampleMultivariate:
    def test_seed_determinism(self, truth):
        y1, x1 = sample_multivariate(truth, 50, 7)
        y2, x2 = sample_multivariate(truth, 50, 7)
        np.testing.assert_array_equal(y1, y2)
        np.testing.assert_array_equal(x1, x2)

    def test_cross_covariance_matches_plant(self, truth):
        n = 50_000
        y, x = sample_multivariate(truth, n, 1)
        cross = y.T @ x / n
        planted = joint_covariance(truth)[:3, 3:]
        # entrywise within 5 standard errors of the Monte-Carlo noise
        se = np.sqrt(3.0 * np.diag(truth.sigma_x)[None, :] / n) * 5.0
        assert np.all(np.abs(cross - planted) < se + 5e-3)

    def test_classical_cca_recovers_planted_structure(self, truth):
        n = 50_000
        y, x = sample_multivariate(truth, n, 2)
        model = classical_cca(y, x)
        np.testing.assert_allclose(model.correlations[:2], [0.95, 0.60], atol=0.02)
        for k in range(2):
            cos = abs(np.dot(model.T[:, k], truth.thetas[:, k]))
            cos /= np.linalg.norm(model.T[:, k]) * np.linalg.norm(truth.thetas[:, k])
            assert cos >= 0.99

    def test_infeasible_correlation_rejected(self):
        cfg = SimConfig(seed=0, gamma=(0.999999, 0.999998))
        bad = make_truth(cfg)
        # push the cross block past feasibility by forging the correlations
        import dataclasses
        forged = dataclasses.replace(bad, gammas=np.array([1.6, 1.5]))
        with pytest.raises(NumericError):
            sample_multivariate(forged, 10, 0)


class TestSynthesizeCurves:
    def test_zero_scores_give_mean_curve(self, truth):
        curves = synthesize_curves(truth, np.zeros((2, 3)), 0, contaminate=False)
        for c in curves:
            np.testing.assert_allclose(c.values, truth.mu.values, atol=1e-10)

    def test_scores_recovered_by_projection(self, truth):
        y, _ = sample_multivariate(truth, 40, 3)
        curves = synthesize_curves(truth, y, 4, contaminate=False)
        from spdcca.fields import log_curve
        for i in (0, 17):
            v = log_curve(truth.mu, curves[i])
            got = [field_inner(v, truth.phis[j]) for j in range(3)]
            np.testing.assert_allclose(got, y[i], atol=1e-8)

    def test_contamination_variance(self, truth):
        # recover W_i by projecting onto the extra mode; Var(W) = 1/2
        n = 50_000
        y = np.zeros((n, 3))
        curves = synthesize_curves(truth, y, 5, contaminate=True)
        stack = np.stack([c.values for c in curves])
        from spdcca import geometry
        logs = geometry.riem_log(truth.mu.values, stack)
        pointwise = geometry.riem_inner(truth.mu.values, logs,
                                        truth.phis[3].values)
        w = pointwise @ truth.mu.grid.weights
        assert np.var(w) == pytest.approx(0.5, rel=0.02)

    def test_seed_determinism(self, truth):
        y, _ = sample_multivariate(truth, 10, 6)
        c1 = synthesize_curves(truth, y, 7)
        c2 = synthesize_curves(truth, y, 7)
        for a, b in zip(c1, c2):
            np.testing.assert_array_equal(a.values, b.values)

    def test_contamination_leaves_recovery_roughly_intact(self):
        # fitting d=4 on contaminated data still recovers the planted vectors
        cfg = SimConfig(p=30, k1=10, N=4000, seed=8)
        truth = make_truth(cfg)
        y, x = sample_multivariate(truth, cfg.N, 9)
        clean = synthesize_curves(truth, y, 10, contaminate=False)
        dirty = synthesize_curves(truth, y, 10, contaminate=True)
        from spdcca.pipeline import fit
        m_clean = fit(clean, x, d=3, lam=0.0)
        m_dirty = fit(dirty, x, d=4, lam=0.0)
        for model in (m_clean, m_dirty):
            cos = abs(np.dot(model.cca.T[:, 0], truth.thetas[:, 0]))
            cos /= np.linalg.norm(model.cca.T[:, 0]) * np.linalg.norm(truth.thetas[:, 0])
            assert cos >= 0.95
        a_clean = abs(np.dot(m_clean.cca.T[:, 0], truth.thetas[:, 0])) / (
            np.linalg.norm(m_clean.cca.T[:, 0]) * np.linalg.norm(truth.thetas[:, 0]))
        a_dirty = abs(np.dot(m_dirty.cca.T[:, 0], truth.thetas[:, 0])) / (
            np.linalg.norm(m_dirty.cca.T[:, 0]) * np.linalg.norm(truth.thetas[:, 0]))
        assert a_clean - a_dirty < 0.05


class TestMetrics:
    def test_norm_error_endpoints(self, rng):
        v = rng.standard_normal(6)
        assert metric_norm_error(v, v) == pytest.approx(0.0)
        assert metric_norm_error(v, -v) == pytest.approx(2.0)
        assert metric_norm_error([1, 0], [0, 2]) == pytest.approx(np.sqrt(2.0))
        with pytest.raises(ValidationError):
            metric_norm_error(v, np.zeros(6))

    def test_f1_cases(self):
        theta = np.zeros(30)
        theta[:20] = 1.0
        assert metric_f1(np.arange(20), theta) == pytest.approx(1.0)
        disjoint = np.zeros(30)
        disjoint[20:25] = 1.0
        assert metric_f1(np.arange(20), disjoint) == 0.0
        half = np.zeros(30)
        half[:10] = 1.0
        assert metric_f1(np.arange(20), half) == pytest.approx(2.0 / 3.0)
        assert metric_f1(np.arange(20), np.zeros(30)) == 0.0

    def test_pt_error_cases(self, truth):
        psi = truth.canonical_function(0)
        assert metric_pt_error(psi, psi) == pytest.approx(0.0, abs=1e-8)
        flipped = TangentField(base=truth.mu, values=-psi.values)
        assert metric_pt_error(psi, flipped) == pytest.approx(2 * field_norm(psi), rel=1e-8)

    def test_pt_error_commuting_transport(self):
        # commuting diagonal curves: transport preserves diagonal fields, so
        # the error equals the in-tangent distance computed at the target
        from spdcca.fields import SPDCurve, TimeGrid
        grid = TimeGrid.regular(-1.0, 1.0, 6)
        mu = SPDCurve(grid=grid, values=np.stack([np.diag([1.0, 2.0])] * 6))
        mu_hat = SPDCurve(grid=grid, values=np.stack([np.diag([2.0, 4.0])] * 6))
        psi = TangentField(base=mu, values=np.stack([np.diag([0.3, -0.1])] * 6))
        psi_hat = TangentField(base=mu_hat, values=np.stack([np.diag([0.8, 0.2])] * 6))
        err = metric_pt_error(psi, psi_hat)
        # closed form: transported field is diag scaled by mu/mu_hat = 1/2
        moved = np.stack([np.diag([0.4, 0.1])] * 6)
        expected = field_norm(TangentField(base=mu, values=moved - psi.values))
        assert err == pytest.approx(expected, rel=1e-10)

    def test_tangent_corr_on_truth_projections(self, truth):
        n = 20_000
        y, x = sample_multivariate(truth, n, 11)
        curves = synthesize_curves(truth, y, 12)
        psi = truth.canonical_function(0)
        corr = metric_tangent_corr(curves, x, psi, truth.thetas[:, 0])
        assert corr == pytest.approx(0.95, abs=0.02)
        flipped = metric_tangent_corr(
            curves, x, TangentField(base=truth.mu, values=-psi.values),
            -truth.thetas[:, 0])
        assert abs(flipped) == pytest.approx(abs(corr), abs=1e-12)

    def test_zero_variance_projection_rejected(self, truth):
        y, x = sample_multivariate(truth, 30, 13)
        curves = synthesize_curves(truth, y, 14)
        with pytest.raises(NumericError):
            metric_tangent_corr(curves, x, truth.canonical_function(0),
                                np.zeros(truth.config.p))

    def test_euclid_corr_joint_flip_invariance(self, truth):
        from spdcca.rfpca import sym_to_coeffs
        y, x = sample_multivariate(truth, 400, 15)
        curves = synthesize_curves(truth, y, 16)
        psi_vec = sym_to_coeffs(truth.canonical_function(0).values)
        theta = truth.thetas[:, 0]
        a = metric_euclid_corr(curves, x, psi_vec, theta, truth.mu.grid)
        b = metric_euclid_corr(curves, x, -psi_vec, -theta, truth.mu.grid)
        assert a == pytest.approx(b, abs=1e-12)
        assert -1.0 <= a <= 1.0


class TestRunTrials:
    def test_shape_and_determinism(self):
        cfg = SimConfig(p=20, k1=6, N=60, seed=42)
        kwargs = dict(n_list=[40, 60], n_trials=2, n_test=200,
                      n_lambdas=6, lambda_min_ratio=0.05, folds=3)
        rows1 = run_trials(cfg, **kwargs)
        rows2 = run_trials(cfg, **kwargs)
        assert rows1 == rows2
        cells = {(r["method"], r["N"], r["trial"]) for r in rows1}
        assert len(cells) == 2 * 2 * 2  # N values x trials x methods
        riem = [r for r in rows1 if r["method"] == "riemannian"]
        assert {r["metric"] for r in riem} == {"A", "B", "C", "D"}
        eucl = [r for r in rows1 if r["method"] == "euclidean"]
        assert {r["metric"] for r in eucl} == {"E"}

    def test_csv_emission(self, tmp_path):
        cfg = SimConfig(p=15, k1=5, N=40, seed=3)
        out = tmp_path / "trials.csv"
        run_trials(cfg, n_list=[40], n_trials=1, methods=("riemannian",),
                   n_test=100, n_lambdas=5, lambda_min_ratio=0.05, folds=3,
                   output_csv=out)
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(TRIALS_HEADER)
        assert len(lines) == 1 + 4  # header + metrics A-D
