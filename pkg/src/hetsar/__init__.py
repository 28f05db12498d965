"""Semiparametric spatial autoregressive models with non-homogeneous variance."""

__version__ = "0.1.0"

from .design import DesignMatrices, ModelSpec, SmoothConfig, assemble_design
from .effects import (ImpactSummary, MoranResult, impact_summary, impacts,
                      moran_scatter, morans_i)
from .estimator import (ConvergenceOptions, FitResult, HeteroscedasticSAR,
                        beta_gls, fit_model, log_det_A, log_det_sigma,
                        penalized_loglik, score_alpha, score_beta, score_rho,
                        select_smoothing, update_scale_model)
from .inference import (InformationMatrix, TestResult, effective_dfs,
                        fisher_information, linear_hypothesis, lr_test,
                        smooth_ci, wald_test)
from .sim import (Scenario, SimulationReport, fit_am_sar, fit_gamlss_lag,
                  fit_hamsar, fit_ml_sar, run_study, simulate_dataset,
                  true_smooth)
from .splines import (SmoothTermBasis, bspline_basis, build_smooth_term,
                      center_basis, difference_penalty, evaluate_smooth)
from .weights import (WeightMatrix, build_inverse_distance_squared,
                      build_rook_grid, eigen_bounds, load_adjacency,
                      load_weight_spec, row_standardize)

__all__ = [
    "ConvergenceOptions", "DesignMatrices", "FitResult", "HeteroscedasticSAR",
    "ImpactSummary", "InformationMatrix", "ModelSpec", "MoranResult",
    "Scenario", "SimulationReport", "SmoothConfig", "SmoothTermBasis",
    "TestResult", "WeightMatrix", "assemble_design", "beta_gls",
    "bspline_basis", "build_inverse_distance_squared", "build_rook_grid",
    "build_smooth_term", "center_basis", "difference_penalty",
    "effective_dfs", "eigen_bounds", "evaluate_smooth", "fisher_information",
    "fit_am_sar", "fit_gamlss_lag", "fit_hamsar", "fit_ml_sar", "fit_model",
    "impact_summary", "impacts", "linear_hypothesis", "load_adjacency",
    "load_weight_spec", "log_det_A", "log_det_sigma", "lr_test",
    "moran_scatter", "morans_i", "penalized_loglik", "row_standardize",
    "run_study", "score_alpha", "score_beta", "score_rho",
    "select_smoothing", "simulate_dataset", "smooth_ci", "true_smooth",
    "update_scale_model", "wald_test",
]
