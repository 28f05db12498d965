import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import minimize_scalar

from hetsar import (ConvergenceOptions, HeteroscedasticSAR, ModelSpec,
                    SmoothConfig, beta_gls, build_rook_grid, fit_model,
                    log_det_A, log_det_sigma, penalized_loglik, score_alpha,
                    score_beta, score_rho, select_smoothing,
                    update_scale_model)
from hetsar.design import assemble_design
from hetsar.estimator import log_det_A_lu
from hetsar.exceptions import ScaleModelError
from hetsar.sim import Scenario, simulate_dataset, true_smooth
from hetsar.weights import eigen_bounds, row_standardize


# ---------------------------------------------------------------------------
# independent oracles (no shared helpers with the production code)


def straight_line_penalized_loglik(rho, beta, alpha, design, W, y):
    """Direct transcription of the penalized log-likelihood, determinants
    computed from the full matrices."""
    n = len(y)
    eta = np.clip(design.scale.X @ alpha, -15.0, 15.0)
    Sigma = np.diag(np.exp(eta) ** 2)
    _, log_det_Sigma = np.linalg.slogdet(Sigma)
    A = np.eye(n) - rho * W.to_dense()
    _, log_det_Amat = np.linalg.slogdet(A)
    resid = A @ y - design.mean.X @ beta
    quad = resid @ np.linalg.solve(Sigma, resid)
    penalty = 0.0
    for blk in design.mean.blocks:
        c = beta[blk.cols]
        penalty += blk.psi * c @ blk.matrix @ c
    for blk in design.scale.blocks:
        c = alpha[blk.cols]
        penalty += blk.psi * c @ blk.matrix @ c
    return (-0.5 * n * np.log(2.0 * np.pi) - 0.5 * log_det_Sigma
            + log_det_Amat - 0.5 * quad - 0.5 * penalty)


def classical_ml_sar(y, X, W, bounds):
    """Textbook concentrated-likelihood SAR estimator with profiled sigma^2."""
    n = len(y)
    ylag = W.to_dense() @ y
    b0, *_ = np.linalg.lstsq(X, y, rcond=None)
    b1, *_ = np.linalg.lstsq(X, ylag, rcond=None)
    e0 = y - X @ b0
    e1 = ylag - X @ b1
    lam = W.eigenvalues

    def negative(rho):
        e = e0 - rho * e1
        s2 = e @ e / n
        return -(-0.5 * n * (np.log(2.0 * np.pi) + 1.0)
                 - 0.5 * n * np.log(s2) + np.sum(np.log(1.0 - rho * lam)))

    res = minimize_scalar(negative, bounds=bounds, method="bounded",
                          options={"xatol": 1e-12})
    rho = float(res.x)
    beta = b0 - rho * b1
    e = e0 - rho * e1
    return rho, beta, float(e @ e / n)


@pytest.fixture()
def linear_design(small_sim):
    frame, W, _ = small_sim
    spec = ModelSpec(response="y", mean_linear=("x1", "x2", "x3"),
                     scale_linear=("x2",))
    return frame, W, assemble_design(spec, frame)


class TestLogDetSigma:
    def test_unit_scale_is_zero(self):
        assert log_det_sigma(np.ones(7)) == 0.0

    def test_exponential_pair(self):
        assert log_det_sigma(np.array([np.e, np.e**2])) == pytest.approx(6.0)

    def test_matches_direct_determinant(self):
        sigma = np.random.default_rng(1).uniform(0.5, 2.0, 5)
        direct = np.log(np.linalg.det(np.diag(sigma**2)))
        assert abs(log_det_sigma(sigma) - direct) < 1e-10

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            log_det_sigma(np.array([1.0, 0.0]))


class TestLogDetA:
    def test_zero_rho(self, small_sim):
        _, W, _ = small_sim
        assert log_det_A(0.0, W) == 0.0

    def test_2x2_hand_determinant(self):
        W = row_standardize(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert log_det_A(0.5, W) == pytest.approx(np.log(0.75), abs=1e-12)

    def test_eigen_route_equals_lu_route(self):
        W = build_rook_grid(9, 9)
        for rho in (-0.7, -0.2, 0.4, 0.9):
            assert abs(log_det_A(rho, W) - log_det_A_lu(rho, W)) < 1e-9

    def test_inadmissible_rho_rejected(self):
        W = row_standardize(np.array([[0.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(ValueError, match="admissible"):
            log_det_A(1.5, W)


class TestBetaGLS:
    def test_reduces_to_ols(self, linear_design):
        frame, W, design = linear_design
        y = frame["y"].to_numpy()
        beta = beta_gls(design, np.full(len(y), 2.0), y)
        ols, *_ = np.linalg.lstsq(design.mean.X, y, rcond=None)
        assert_allclose(beta, ols, atol=1e-8)

    def test_huge_penalty_makes_block_affine(self, small_sim, small_design):
        frame, _, _ = small_sim
        design = small_design
        design.mean.blocks[0].psi = 1e12
        y = frame["y"].to_numpy()
        beta = beta_gls(design, np.ones(len(y)), y)
        term = design.mean.smooths["x3"]
        grid = np.linspace(*term.span, 30)
        contribution = term.basis_at(grid) @ beta[design.mean.blocks[0].cols]
        # affine in the covariate: second differences vanish on a uniform grid
        assert np.abs(np.diff(contribution, n=2)).max() < 1e-5
        design.mean.blocks[0].psi = 1.0

    def test_score_zero_at_solution(self, small_sim, small_design):
        frame, W, _ = small_sim
        design = small_design
        rng = np.random.default_rng(9)
        design.mean.blocks[0].psi = 3.7
        sigma = rng.uniform(0.6, 1.8, len(frame))
        Ay = rng.normal(size=len(frame))
        beta = beta_gls(design, sigma, Ay)
        resid = Ay - design.mean.X @ beta
        score = design.mean.X.T @ (resid / sigma**2) - design.mean.penalty_grad(beta)
        assert np.linalg.norm(score) < 1e-8
        design.mean.blocks[0].psi = 1.0


class TestPenalizedLoglik:
    def test_reduces_to_homoscedastic_gaussian(self, linear_design):
        frame, W, design = linear_design
        y = frame["y"].to_numpy()
        n = len(y)
        beta = np.zeros(design.mean.p)
        beta[0] = y.mean()
        alpha = np.zeros(design.scale.p)  # sigma = 1 everywhere
        value = penalized_loglik(0.0, beta, alpha, design, W, y)
        resid = y - design.mean.X @ beta
        expected = -0.5 * n * np.log(2 * np.pi) - 0.5 * resid @ resid
        assert value == pytest.approx(expected, abs=1e-10)

    def test_zero_psi_drops_penalty(self, small_sim, small_design):
        frame, W, _ = small_sim
        design = small_design
        rng = np.random.default_rng(2)
        beta = rng.normal(size=design.mean.p)
        alpha = rng.normal(0, 0.2, design.scale.p)
        y = frame["y"].to_numpy()
        design.mean.blocks[0].psi = 0.0
        with_pen = penalized_loglik(0.2, beta, alpha, design, W, y)
        design.mean.blocks[0].psi = 4.0
        without = penalized_loglik(0.2, beta, alpha, design, W, y)
        quad = beta[design.mean.blocks[0].cols] @ design.mean.blocks[0].matrix \
            @ beta[design.mean.blocks[0].cols]
        assert with_pen - without == pytest.approx(0.5 * 4.0 * quad, rel=1e-10)
        design.mean.blocks[0].psi = 1.0

    def test_matches_independent_reimplementation(self, small_sim, small_design):
        frame, W, _ = small_sim
        design = small_design
        rng = np.random.default_rng(3)
        y = frame["y"].to_numpy()
        design.mean.blocks[0].psi = 2.2
        for _ in range(5):
            beta = rng.normal(0, 0.5, design.mean.p)
            alpha = rng.normal(0, 0.3, design.scale.p)
            rho = rng.uniform(-0.7, 0.7)
            mine = penalized_loglik(rho, beta, alpha, design, W, y)
            oracle = straight_line_penalized_loglik(rho, beta, alpha, design, W, y)
            assert mine == pytest.approx(oracle, abs=1e-10)
        design.mean.blocks[0].psi = 1.0


class TestScores:
    def test_all_scores_match_finite_differences(self, small_sim, small_design):
        frame, W, _ = small_sim
        design = small_design
        design.mean.blocks[0].psi = 2.5
        y = frame["y"].to_numpy()
        p, q = design.mean.p, design.scale.p
        rng = np.random.default_rng(12)

        def lp(theta):
            return penalized_loglik(theta[p], theta[:p], theta[p + 1:],
                                    design, W, y)

        worst = 0.0
        for _ in range(20):
            beta = rng.normal(0, 0.5, p)
            rho = rng.uniform(-0.6, 0.6)
            alpha = rng.normal(0, 0.3, q)
            theta = np.concatenate([beta, [rho], alpha])
            analytic = np.concatenate([
                score_beta(rho, beta, alpha, design, W, y),
                [score_rho(rho, beta, alpha, design, W, y)],
                score_alpha(rho, beta, alpha, design, W, y)])
            numeric = np.zeros_like(theta)
            for i in range(theta.size):
                h = 1e-6 * max(1.0, abs(theta[i]))
                up, down = theta.copy(), theta.copy()
                up[i] += h
                down[i] -= h
                numeric[i] = (lp(up) - lp(down)) / (2.0 * h)
            rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
            worst = max(worst, float(rel.max()))
        assert worst < 1e-5
        design.mean.blocks[0].psi = 1.0

    def test_score_rho_at_zero_has_no_trace_term(self, linear_design):
        frame, W, design = linear_design
        rng = np.random.default_rng(4)
        y = frame["y"].to_numpy()
        beta = rng.normal(size=design.mean.p)
        alpha = np.zeros(design.scale.p)
        value = score_rho(0.0, beta, alpha, design, W, y)
        resid = y - design.mean.X @ beta
        assert value == pytest.approx(float(resid @ W.lag(y)), rel=1e-12)


class TestUpdateScaleModel:
    def test_intercept_only_matches_closed_form(self, linear_design):
        frame, _, _ = linear_design
        spec = ModelSpec(response="y", mean_linear=("x1",))
        design = assemble_design(spec, frame)
        rng = np.random.default_rng(5)
        resid = rng.normal(0, 1.7, len(frame))
        alpha = update_scale_model(resid, design, np.array([0.0]))
        assert alpha[0] == pytest.approx(0.5 * np.log(np.mean(resid**2)),
                                         abs=1e-9)

    def test_stopping_rule_score_norm(self, linear_design):
        frame, W, design = linear_design
        rng = np.random.default_rng(6)
        resid = rng.normal(0, 1.0, len(frame)) * np.exp(0.3 * frame["x2"])
        alpha = update_scale_model(resid, design, np.zeros(design.scale.p))
        sigma = np.exp(design.scale.X @ alpha)
        score = design.scale.X.T @ ((resid / sigma) ** 2 - 1.0)
        assert np.linalg.norm(score) < 1e-8

    def test_nonconvergence_carries_state(self, linear_design):
        frame, _, design = linear_design
        resid = np.random.default_rng(7).normal(size=len(frame))
        with pytest.raises(ScaleModelError) as err:
            update_scale_model(resid, design, np.zeros(design.scale.p),
                               max_iter=1, scale_score_tol=1e-14)
        assert err.value.last_alpha is not None
        assert err.value.score_norm > 0

    def test_rejects_nonfinite_residuals(self, linear_design):
        _, _, design = linear_design
        with pytest.raises(ValueError, match="finite"):
            update_scale_model(np.array([np.nan] * design.X_scale.shape[0]),
                               design, np.zeros(design.scale.p))


class TestSelectSmoothing:
    def test_no_smooths_is_noop(self, linear_design):
        frame, _, design = linear_design
        y = frame["y"].to_numpy()
        psi_mean, psi_scale = select_smoothing(design, np.ones(len(y)), y)
        assert psi_mean == {} and psi_scale == {}

    def test_pure_noise_lands_in_top_decade(self):
        rng = np.random.default_rng(8)
        frame = pd.DataFrame({"y": rng.normal(size=200),
                              "x": rng.uniform(size=200)})
        spec = ModelSpec(response="y", mean_smooth=(SmoothConfig("x"),))
        design = assemble_design(spec, frame)
        y = frame["y"].to_numpy()
        psi_mean, _ = select_smoothing(design, np.ones(200), y)
        assert psi_mean["x"] >= 1e5

    def test_signal_beats_oversmoothed_fit(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(size=300)
        truth = true_smooth(x)
        frame = pd.DataFrame({"y": truth + rng.normal(0, 0.5, 300), "x": x})
        spec = ModelSpec(response="y", mean_smooth=(SmoothConfig("x"),))
        design = assemble_design(spec, frame)
        y = frame["y"].to_numpy()
        sigma = np.ones(300)
        select_smoothing(design, sigma, y)

        def fitted(psi):
            design.mean.blocks[0].psi = psi
            beta = beta_gls(design, sigma, y)
            return design.mean.X @ beta

        selected = design.mean.blocks[0].psi
        mse_selected = np.mean((fitted(selected) - (truth - truth.mean()
                                                    + truth.mean())) ** 2)
        mse_oversmoothed = np.mean((fitted(1e6) - truth) ** 2)
        assert mse_selected < mse_oversmoothed


class TestFit:
    def test_reduction_chain_matches_classical_ml_sar(self):
        scenario = Scenario(layout={"kind": "grid_rook", "rows": 10, "cols": 10},
                            rho=0.45, alpha1=0.0, alpha0=0.0, replicates=1,
                            seed=3)
        frame, W = simulate_dataset(scenario, 0)
        spec = ModelSpec(response="y", mean_linear=("x1", "x2", "x3"))
        options = ConvergenceOptions(rho_tol=1e-9, loglik_rel_tol=1e-13,
                                     max_outer=200)
        fit = fit_model(spec, frame, W, options, compute_fisher=False)
        rho_oracle, beta_oracle, s2_oracle = classical_ml_sar(
            frame["y"].to_numpy(), fit.design.mean.X, W, eigen_bounds(W))
        assert fit.converged
        assert fit.rho == pytest.approx(rho_oracle, abs=1e-6)
        assert_allclose(fit.beta, beta_oracle, atol=1e-6)
        assert fit.sigma[0] ** 2 == pytest.approx(s2_oracle, rel=1e-6)

    def test_scores_vanish_at_optimum(self, medium_fit):
        _, W, fit = medium_fit
        args = (fit.rho, fit.beta, fit.alpha, fit.design, W, fit.y)
        assert np.linalg.norm(score_beta(*args)) < 1e-6
        assert abs(score_rho(*args)) < 1e-6
        assert np.linalg.norm(score_alpha(*args)) < 1e-6

    def test_loglik_trace_monotone_at_fixed_smoothing(self, medium_fit):
        _, _, fit = medium_fit
        for k in range(1, len(fit.loglik_trace)):
            if fit.psi_trace[k] == fit.psi_trace[k - 1]:
                assert fit.loglik_trace[k] >= fit.loglik_trace[k - 1] - 1e-8
        # global improvement over the first filtered iteration
        assert fit.loglik_trace[-1] >= fit.loglik_trace[1] - 1e-8

    def test_deterministic_given_inputs(self, small_sim):
        frame, W, spec = small_sim
        a = fit_model(spec, frame, W, compute_fisher=False)
        b = fit_model(spec, frame, W, compute_fisher=False)
        assert a.rho == b.rho
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.alpha, b.alpha)

    def test_null_dgp_rho_centered_at_zero(self):
        scenario = Scenario(layout={"kind": "grid_rook", "rows": 12, "cols": 12},
                            rho=0.0, replicates=15, seed=21)
        spec = ModelSpec(response="y", mean_linear=("x1", "x2"),
                         mean_smooth=(SmoothConfig("x3"),),
                         scale_linear=("x2",))
        _, W = simulate_dataset(scenario, 0)
        rhos = []
        for rep in range(scenario.replicates):
            frame, _ = simulate_dataset(scenario, rep, weights=W)
            rhos.append(fit_model(spec, frame, W, compute_fisher=False).rho)
        rhos = np.asarray(rhos)
        margin = 2.0 * rhos.std(ddof=1) / np.sqrt(rhos.size)
        assert abs(rhos.mean()) < margin

    def test_homoscedastic_dgp_scale_slope_near_zero(self):
        scenario = Scenario(layout={"kind": "grid_rook", "rows": 12, "cols": 12},
                            rho=0.3, alpha1=0.0, replicates=1, seed=22)
        frame, W = simulate_dataset(scenario, 0)
        fit = fit_model(ModelSpec(response="y", mean_linear=("x1", "x2"),
                                  mean_smooth=(SmoothConfig("x3"),),
                                  scale_linear=("x2",)), frame, W)
        se_alpha = fit.fisher.se("alpha")
        assert abs(fit.alpha[1]) < 2.0 * se_alpha[1]

    def test_fix_rho_skips_search(self, small_sim):
        frame, W, spec = small_sim
        fit = fit_model(spec, frame, W, fix_rho=0.0, compute_fisher=False)
        assert fit.rho == 0.0
        assert fit.rho_fixed and fit.converged

    def test_weight_size_mismatch_rejected(self, small_sim):
        frame, _, spec = small_sim
        with pytest.raises(ValueError, match="rows"):
            fit_model(spec, frame, build_rook_grid(3, 3))


class TestSklearnWrapper:
    def test_fit_predict_and_params(self, small_sim):
        frame, W, spec = small_sim
        model = HeteroscedasticSAR(spec.to_dict(), max_outer=40)
        assert model.get_params()["max_outer"] == 40
        model.set_params(rho_tol=1e-5)
        fitted = model.fit(frame, W)
        assert fitted is model
        assert model.converged_
        predictions = model.predict()
        assert predictions.shape == (len(frame),)
        assert_allclose(predictions, model.result_.fitted_mean)
        mse = np.mean((frame["y"].to_numpy() - predictions) ** 2)
        assert mse == pytest.approx(model.result_.mse)

    def test_predict_new_data_rejected(self, small_sim):
        frame, W, spec = small_sim
        model = HeteroscedasticSAR(spec).fit(frame, W)
        with pytest.raises(ValueError, match="in-sample"):
            model.predict(frame)

    def test_unfitted_predict_rejected(self, small_sim):
        _, _, spec = small_sim
        with pytest.raises(ValueError, match="not fitted"):
            HeteroscedasticSAR(spec).predict()
