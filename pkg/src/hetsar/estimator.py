"""Penalized maximum likelihood for the heteroscedastic semiparametric SAR model.

The model filters the response with A = I - rho*W and fits a Gaussian
location-scale regression to the filtered values: the mean predictor is
linear in the assembled design (linear columns plus centered spline blocks)
and the log standard deviation is linear in its own design.  Estimation
alternates a profile search for rho on the concentrated log-likelihood with
penalized location-scale refits on the filtered response, re-selecting the
smoothing parameters by GCV each round.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg as sla
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator

from .design import DesignMatrices, ModelSpec, assemble_design, _column
from .exceptions import ScaleModelError, SingularSystemError
from .weights import WeightMatrix, eigen_bounds

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
PSI_GRID = np.logspace(-4.0, 6.0, 21)


@dataclass(frozen=True)
class ConvergenceOptions:
    """Tolerances and iteration caps for :func:`fit_model`."""

    rho_tol: float = 1e-6
    max_outer: int = 50
    scale_score_tol: float = 1e-8
    clamp_bound: float = 15.0
    max_inner: int = 30
    loglik_rel_tol: float = 1e-8


# ---------------------------------------------------------------------------
# likelihood pieces


def log_det_sigma(sigma):
    """log|Sigma| for diagonal Sigma with entries sigma_i^2.

    The Cholesky factor of the diagonal covariance is diag(sigma), so the
    log determinant is just 2 * sum(log(sigma_i)).
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or np.any(sigma <= 0):
        raise ValueError("all standard deviations must be positive")
    return 2.0 * float(np.sum(np.log(sigma)))


def log_det_A(rho, W):
    """log|I - rho*W| via the spectrum when available, else dense LU."""
    lam = W.eigenvalues
    if lam is not None:
        factors = 1.0 - rho * lam
        if np.any(factors <= 0):
            raise ValueError(f"rho={rho} outside the admissible interval")
        return float(np.sum(np.log(factors)))
    sign, logdet = np.linalg.slogdet(np.eye(W.n) - rho * W.dense)
    if sign <= 0:
        raise ValueError(f"rho={rho} makes I - rho*W non positive definite")
    return float(logdet)


def log_det_A_lu(rho, W):
    """Dense LU route for log|I - rho*W| (cross-check for the eigen route)."""
    sign, logdet = np.linalg.slogdet(np.eye(W.n) - rho * W.dense)
    if sign <= 0:
        raise ValueError(f"rho={rho} makes I - rho*W non positive definite")
    return float(logdet)


def _trace_Ainv_W(rho, W):
    lam = W.eigenvalues
    if lam is not None:
        return float(np.sum(lam / (1.0 - rho * lam)))
    A = np.eye(W.n) - rho * W.dense
    return float(np.trace(np.linalg.solve(A, W.dense)))


def _sigma_from_alpha(design, alpha, clamp_bound):
    """Scale predictor -> per-unit standard deviations, counting clamps."""
    eta = design.scale.X @ alpha
    n_clamped = int(np.count_nonzero(np.abs(eta) > clamp_bound))
    if n_clamped:
        logger.warning("scale linear predictor clamped at %d observation(s)",
                       n_clamped)
    return np.exp(np.clip(eta, -clamp_bound, clamp_bound)), n_clamped


def _chol_factor(C):
    """Cholesky with jitter escalation; raises SingularSystemError above 1e-6."""
    scale = max(float(np.mean(np.diag(C))), np.finfo(float).tiny)
    eye = np.eye(C.shape[0])
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            return sla.cho_factor(C + jitter * scale * eye, lower=True,
                                  check_finite=False)
        except np.linalg.LinAlgError:
            continue
    raise SingularSystemError(
        "penalized normal matrix is singular even after jitter "
        f"(condition number {np.linalg.cond(C):.3e})",
        condition_number=float(np.linalg.cond(C)))


def beta_gls(design, sigma, Ay):
    """Closed-form penalized GLS solution for the mean coefficients.

    Solves (X' Sigma^-1 X + sum_j psi_j G_j) beta = X' Sigma^-1 Ay using the
    smoothing parameters currently stored on the design's penalty blocks.
    """
    X = design.mean.X
    w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    Xw = X * w[:, None]
    C = X.T @ Xw + design.mean.penalty() + design.mean.completion()
    cf = _chol_factor(C)
    return sla.cho_solve(cf, Xw.T @ np.asarray(Ay, dtype=float),
                         check_finite=False)


def penalized_loglik(rho, beta, alpha, design, W, y, clamp_bound=15.0):
    """Penalized Gaussian log-likelihood of the spatial location-scale model."""
    y = np.asarray(y, dtype=float)
    n = y.size
    sigma, _ = _sigma_from_alpha(design, alpha, clamp_bound)
    Ay = y - rho * W.lag(y)
    r = Ay - design.mean.X @ beta
    quad = float(np.sum((r / sigma) ** 2))
    pen = design.mean.penalty_quad(beta) + design.scale.penalty_quad(alpha)
    return (-0.5 * n * LOG_2PI - 0.5 * log_det_sigma(sigma) + log_det_A(rho, W)
            - 0.5 * quad - 0.5 * pen)


def loglik(rho, beta, alpha, design, W, y, clamp_bound=15.0):
    """Unpenalized log-likelihood (basis of the global deviance)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    sigma, _ = _sigma_from_alpha(design, alpha, clamp_bound)
    r = y - rho * W.lag(y) - design.mean.X @ beta
    quad = float(np.sum((r / sigma) ** 2))
    return (-0.5 * n * LOG_2PI - 0.5 * log_det_sigma(sigma)
            + log_det_A(rho, W) - 0.5 * quad)


def score_beta(rho, beta, alpha, design, W, y, clamp_bound=15.0):
    """Gradient of the penalized log-likelihood in the mean coefficients."""
    sigma, _ = _sigma_from_alpha(design, alpha, clamp_bound)
    r = np.asarray(y, float) - rho * W.lag(y) - design.mean.X @ beta
    return design.mean.X.T @ (r / sigma**2) - design.mean.penalty_grad(beta)


def score_rho(rho, beta, alpha, design, W, y, clamp_bound=15.0):
    """Derivative of the penalized log-likelihood in rho."""
    sigma, _ = _sigma_from_alpha(design, alpha, clamp_bound)
    Wy = W.lag(y)
    r = np.asarray(y, float) - rho * Wy - design.mean.X @ beta
    return float(-_trace_Ainv_W(rho, W) + (r / sigma**2) @ Wy)


def score_alpha(rho, beta, alpha, design, W, y, clamp_bound=15.0):
    """Gradient of the penalized log-likelihood in the scale coefficients.

    Under the log standard deviation link the unpenalized part is
    X_sigma' (r^2 / sigma^2 - 1); the penalty contributes -psi G alpha.
    """
    sigma, _ = _sigma_from_alpha(design, alpha, clamp_bound)
    r = np.asarray(y, float) - rho * W.lag(y) - design.mean.X @ beta
    u = (r / sigma) ** 2 - 1.0
    return design.scale.X.T @ u - design.scale.penalty_grad(alpha)


# ---------------------------------------------------------------------------
# scale-model scoring


def update_scale_model(residuals, design, alpha_init, scale_score_tol=1e-8,
                       clamp_bound=15.0, max_iter=100):
    """Fisher scoring for the log standard deviation coefficients.

    Given filtered-model residuals r = Ay - X beta, maximizes
    -sum(log sigma) - 0.5 sum(r^2/sigma^2) - 0.5 alpha' P alpha over alpha
    with sigma = exp(X_sigma alpha).  The expected information is
    2 X_sigma' X_sigma + P; steps are halved whenever they fail to improve
    the objective.
    """
    r = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    Xs = design.scale.X
    P = design.scale.penalty() + design.scale.completion()
    info = 2.0 * Xs.T @ Xs + P
    cf = _chol_factor(info)
    alpha = np.array(alpha_init, dtype=float)

    def objective(a):
        eta = np.clip(Xs @ a, -clamp_bound, clamp_bound)
        return float(-np.sum(eta) - 0.5 * np.sum(r**2 * np.exp(-2.0 * eta))
                     - 0.5 * a @ P @ a)

    current = objective(alpha)
    score_norm = np.inf
    for _ in range(max_iter):
        eta = np.clip(Xs @ alpha, -clamp_bound, clamp_bound)
        u = r**2 * np.exp(-2.0 * eta) - 1.0
        g = Xs.T @ u - P @ alpha
        score_norm = float(np.linalg.norm(g))
        if score_norm < scale_score_tol:
            return alpha
        step = sla.cho_solve(cf, g, check_finite=False)
        t = 1.0
        while t > 1e-10:
            candidate = alpha + t * step
            value = objective(candidate)
            if value >= current - 1e-12:
                alpha, current = candidate, value
                break
            t *= 0.5
        else:
            break
    raise ScaleModelError(
        f"scale model scoring did not reach tolerance {scale_score_tol:g} "
        f"(score norm {score_norm:.3e})", last_alpha=alpha,
        score_norm=score_norm)


# ---------------------------------------------------------------------------
# smoothing-parameter selection


def _golden_min(f, lo, hi, tol=1e-3, max_iter=60):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def _select_psi_block(gcv, grid=PSI_GRID):
    """Grid search on log-spaced psi values, refined by golden section."""
    values = np.array([gcv(p) for p in grid])
    if not np.any(np.isfinite(values)):
        return float(grid[-1])
    best = int(np.nanargmin(values))
    log_grid = np.log10(grid)
    lo = log_grid[max(best - 1, 0)]
    hi = log_grid[min(best + 1, len(grid) - 1)]
    refined = _golden_min(lambda t: gcv(10.0**t), lo, hi)
    refined_value = gcv(10.0**refined)
    if np.isfinite(refined_value) and refined_value <= values[best]:
        return float(10.0**refined)
    return float(grid[best])


def _gcv_penalized_wls(sub, M0, rhs, yy, n):
    """Block-wise GCV on a weighted penalized least squares problem.

    M0 is the weighted cross-product matrix, rhs the weighted X'z vector and
    yy the weighted squared norm of the response.  Updates each block's psi
    in place, one coordinate pass over the blocks.
    """
    comp = sub.completion()
    for blk in sub.blocks:
        def gcv(psi, blk=blk):
            old = blk.psi
            blk.psi = psi
            C = M0 + sub.penalty() + comp
            blk.psi = old
            try:
                cf = _chol_factor(C)
            except SingularSystemError:
                return np.inf
            coef = sla.cho_solve(cf, rhs, check_finite=False)
            edf = float(np.trace(sla.cho_solve(cf, M0, check_finite=False)))
            if edf >= n - 1:
                return np.inf
            rss = yy - 2.0 * rhs @ coef + coef @ M0 @ coef
            if rss <= 0:
                return np.inf
            return n * rss / (n - edf) ** 2
        blk.psi = _select_psi_block(gcv)


def select_smoothing(design, sigma, Ay, alpha=None, residuals=None):
    """GCV update of every smoothing parameter, mean then scale submodel.

    The mean-model criterion works on the penalized weighted least squares
    problem for the filtered response; the scale-model criterion works on
    the Fisher-scoring working response.  No-op for submodels without
    smooth terms.

    Returns
    -------
    (dict, dict)
        Selected psi per mean term and per scale term.
    """
    Ay = np.asarray(Ay, dtype=float)
    n = Ay.size
    if design.mean.blocks:
        X = design.mean.X
        w = 1.0 / np.asarray(sigma, float) ** 2
        Xw = X * w[:, None]
        M0 = X.T @ Xw
        rhs = Xw.T @ Ay
        yy = float(Ay @ (w * Ay))
        _gcv_penalized_wls(design.mean, M0, rhs, yy, n)
    if design.scale.blocks:
        if alpha is None or residuals is None:
            raise ValueError("scale-model GCV needs alpha and residuals")
        Xs = design.scale.X
        sig = np.exp(np.clip(Xs @ alpha, -15.0, 15.0))
        u = (np.asarray(residuals, float) / sig) ** 2 - 1.0
        z = Xs @ alpha + 0.5 * u
        M0 = 2.0 * Xs.T @ Xs
        rhs = 2.0 * Xs.T @ z
        yy = float(2.0 * z @ z)
        _gcv_penalized_wls(design.scale, M0, rhs, yy, n)
    return design.mean.psi_values(), design.scale.psi_values()


# ---------------------------------------------------------------------------
# profile search for rho


def _profile_rho(design, sigma, y, Wy, W, bounds):
    """Maximize the concentrated penalized log-likelihood over rho.

    beta is profiled out analytically at each trial rho; sigma, alpha and
    the smoothing parameters stay fixed.  Because beta(rho) is affine in
    rho, the quadratic part of the objective collapses to a polynomial and
    each evaluation only costs the log determinant.
    """
    X = design.mean.X
    w = 1.0 / np.asarray(sigma, float) ** 2
    Xw = X * w[:, None]
    P1 = design.mean.penalty()
    C = X.T @ Xw + P1 + design.mean.completion()
    cf = _chol_factor(C)
    c0 = sla.cho_solve(cf, Xw.T @ y, check_finite=False)
    c1 = sla.cho_solve(cf, Xw.T @ Wy, check_finite=False)
    e0 = y - X @ c0
    e1 = Wy - X @ c1
    q00 = float(e0 @ (w * e0)) + float(c0 @ P1 @ c0)
    q01 = float(e0 @ (w * e1)) + float(c0 @ P1 @ c1)
    q11 = float(e1 @ (w * e1)) + float(c1 @ P1 @ c1)

    def negative(rho):
        return -(log_det_A(rho, W)
                 - 0.5 * (q00 - 2.0 * rho * q01 + rho * rho * q11))

    result = minimize_scalar(negative, bounds=bounds, method="bounded",
                             options={"xatol": 1e-10})
    rho = float(result.x)
    # Newton refinement of the profile score (equals the full rho-score at
    # the profiled beta, by the envelope theorem); Brent alone leaves the
    # stationarity residual near its xatol times the curvature
    for _ in range(3):
        grad = -_trace_Ainv_W(rho, W) + q01 - rho * q11
        lam = W.eigenvalues
        if lam is not None:
            curv = float(np.sum((lam / (1.0 - rho * lam)) ** 2)) + q11
        else:
            A = np.eye(W.n) - rho * W.dense
            AinvW = np.linalg.solve(A, W.dense)
            curv = float(np.sum(AinvW * AinvW.T)) + q11
        if curv <= 0:
            break
        step = grad / curv
        candidate = rho + step
        if not bounds[0] < candidate < bounds[1]:
            break
        rho = candidate
        if abs(step) < 1e-13:
            break
    return rho


# ---------------------------------------------------------------------------
# the outer algorithm


@dataclass
class FitResult:
    """Everything the inference, effects and serialization layers need."""

    spec: ModelSpec
    rho: float
    beta: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    penalized_loglik: float
    loglik: float
    global_deviance: float
    edf_mean: float
    edf_scale: float
    edf_err: float
    iterations: int
    converged: bool
    rho_fixed: bool
    design: DesignMatrices
    weights: WeightMatrix
    psi_mean: dict
    psi_scale: dict
    loglik_trace: list
    psi_trace: list               # smoothing parameters at each logged point
    rho_trace: list
    clamp_events: int
    y: np.ndarray
    fisher: object = None

    @property
    def n(self):
        return self.y.size

    @property
    def residuals(self):
        """Filtered-model residuals Ay - X beta."""
        Ay = self.y - self.rho * self.weights.lag(self.y)
        return Ay - self.design.mean.X @ self.beta

    @property
    def std_residuals(self):
        return self.residuals / self.sigma

    @property
    def fitted_mean(self):
        """In-sample conditional mean rho*Wy + X beta."""
        return self.y - self.residuals

    @property
    def mse(self):
        return float(np.mean(self.residuals**2))

    @property
    def rho_se(self):
        if self.fisher is None:
            return None
        return self.fisher.se("rho")[0]


def _location_scale_cycle(Ay, design, alpha, options):
    """Alternate GCV, penalized GLS for beta and scale scoring to a fixed point."""
    sigma, clamps = _sigma_from_alpha(design, alpha, options.clamp_bound)
    beta = None
    previous = None
    for _ in range(options.max_inner):
        if design.mean.blocks or design.scale.blocks:
            residuals = None if beta is None else Ay - design.mean.X @ beta
            if design.scale.blocks and residuals is None:
                beta = beta_gls(design, sigma, Ay)
                residuals = Ay - design.mean.X @ beta
            select_smoothing(design, sigma, Ay, alpha=alpha, residuals=residuals)
        beta = beta_gls(design, sigma, Ay)
        residuals = Ay - design.mean.X @ beta
        alpha = update_scale_model(residuals, design, alpha,
                                   scale_score_tol=options.scale_score_tol,
                                   clamp_bound=options.clamp_bound)
        sigma, n_clamped = _sigma_from_alpha(design, alpha, options.clamp_bound)
        clamps += n_clamped
        core = (-float(np.sum(np.log(sigma)))
                - 0.5 * float(np.sum((residuals / sigma) ** 2))
                - 0.5 * design.mean.penalty_quad(beta)
                - 0.5 * design.scale.penalty_quad(alpha))
        if previous is not None and abs(core - previous) <= 1e-9 * (1 + abs(core)):
            break
        previous = core
    return beta, alpha, sigma, clamps


def fit_model(spec, data, weights, options=None, *, fix_rho=None,
              compute_fisher=True):
    """Fit the heteroscedastic semiparametric SAR model.

    Parameters
    ----------
    spec : ModelSpec
    data : pandas.DataFrame or mapping of column name to array
    weights : WeightMatrix
        Row-standardized, with as many rows as the data.
    options : ConvergenceOptions, optional
    fix_rho : float, optional
        Pin the autoregressive parameter instead of estimating it (used for
        likelihood-ratio null fits and lag-as-regressor baselines).
    compute_fisher : bool
        Assemble the Fisher information and effective degrees of freedom;
        simulation studies switch this off for throughput.

    Returns
    -------
    FitResult
        With ``converged=False`` when the outer loop hits its cap or the
        rho search lands on an eigenvalue bound; estimates are still
        returned in that case.
    """
    options = options or ConvergenceOptions()
    if not isinstance(data, pd.DataFrame):
        data = pd.DataFrame(data)
    design = assemble_design(spec, data)
    y = _column(data, spec.response)
    n = y.size
    if weights.n != n:
        raise ValueError(f"weight matrix is {weights.n}x{weights.n} but the "
                         f"data has {n} rows")
    Wy = weights.lag(y)
    bounds = eigen_bounds(weights)
    if fix_rho is not None and not (bounds[0] <= fix_rho <= bounds[1]):
        raise ValueError(f"fix_rho={fix_rho} outside admissible {bounds}")

    beta0, *_ = np.linalg.lstsq(design.mean.X, y, rcond=None)
    sd0 = float(np.std(y - design.mean.X @ beta0))
    if sd0 <= 0:
        raise ValueError("response is perfectly fit by the mean design; "
                         "scale model is degenerate")
    alpha = np.zeros(design.scale.p)
    alpha[0] = math.log(sd0)

    rho = float(fix_rho) if fix_rho is not None else 0.0
    beta, alpha, sigma, clamps = _location_scale_cycle(
        y - rho * Wy, design, alpha, options)

    loglik_trace = []
    psi_trace = []
    rho_trace = [rho]
    iterations = 0
    converged = fix_rho is not None

    def log_point(lp_value):
        loglik_trace.append(lp_value)
        psi_trace.append({"mean": design.mean.psi_values(),
                          "scale": design.scale.psi_values()})

    if fix_rho is None:
        rho = _profile_rho(design, sigma, y, Wy, weights, bounds)
        rho_trace.append(rho)
        log_point(penalized_loglik(rho, beta, alpha, design, weights, y,
                                   options.clamp_bound))
        for outer in range(1, options.max_outer + 1):
            iterations = outer
            beta, alpha, sigma, nc = _location_scale_cycle(
                y - rho * Wy, design, alpha, options)
            clamps += nc
            rho_new = _profile_rho(design, sigma, y, Wy, weights, bounds)
            lp = penalized_loglik(rho_new, beta, alpha, design, weights, y,
                                  options.clamp_bound)
            rho_trace.append(rho_new)
            drho = abs(rho_new - rho)
            dlp = abs(lp - loglik_trace[-1]) / (1.0 + abs(lp))
            log_point(lp)
            rho = rho_new
            if drho < options.rho_tol and dlp < options.loglik_rel_tol:
                converged = True
                break
        span = bounds[1] - bounds[0]
        if min(rho - bounds[0], bounds[1] - rho) < 1e-5 * span:
            logger.warning("rho search stopped at an eigenvalue bound "
                           "(rho=%.6f)", rho)
            converged = False

    beta, alpha, sigma, nc = _location_scale_cycle(
        y - rho * Wy, design, alpha, options)
    clamps += nc

    # stationarity polish at the selected smoothing parameters: the
    # alternating refits above can leave a half-step lag between beta and
    # sigma, so cycle the exact sub-solves until the joint point stops
    # moving and every score is zero to solver precision
    for _ in range(50):
        if fix_rho is None:
            rho = _profile_rho(design, sigma, y, Wy, weights, bounds)
        Ay = y - rho * Wy
        beta_new = beta_gls(design, sigma, Ay)
        alpha_new = update_scale_model(Ay - design.mean.X @ beta_new, design,
                                       alpha,
                                       scale_score_tol=options.scale_score_tol,
                                       clamp_bound=options.clamp_bound)
        sigma, nc = _sigma_from_alpha(design, alpha_new, options.clamp_bound)
        clamps += nc
        delta = max(np.max(np.abs(beta_new - beta)),
                    np.max(np.abs(alpha_new - alpha)))
        beta, alpha = beta_new, alpha_new
        if delta < 1e-10:
            break
    rho_trace.append(rho)

    lp = penalized_loglik(rho, beta, alpha, design, weights, y,
                          options.clamp_bound)
    log_point(lp)
    ll = loglik(rho, beta, alpha, design, weights, y, options.clamp_bound)

    from . import inference  # deferred: inference consumes FitResult

    result = FitResult(
        spec=spec, rho=rho, beta=beta, alpha=alpha, sigma=sigma,
        penalized_loglik=lp, loglik=ll, global_deviance=-2.0 * ll,
        edf_mean=float("nan"), edf_scale=float("nan"), edf_err=float("nan"),
        iterations=iterations, converged=converged,
        rho_fixed=fix_rho is not None, design=design, weights=weights,
        psi_mean=design.mean.psi_values(), psi_scale=design.scale.psi_values(),
        loglik_trace=loglik_trace, psi_trace=psi_trace, rho_trace=rho_trace,
        clamp_events=clamps, y=y)
    result.edf_mean, result.edf_scale, result.edf_err = \
        inference.effective_dfs(result)
    if compute_fisher:
        result.fisher = inference.fisher_information(result, weights)
    return result


class HeteroscedasticSAR(BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit_model`.

    Parameters
    ----------
    spec : ModelSpec or dict
        Model specification; a dict uses the model-spec document format.
    rho_tol, max_outer, scale_score_tol, clamp_bound
        Convergence options, see :class:`ConvergenceOptions`.

    Examples
    --------
    >>> model = HeteroscedasticSAR({"response": "y",
    ...                             "mean": {"linear": ["x1"]},
    ...                             "scale": {"linear": ["x1"]}})
    >>> model.fit(frame, weights).rho_   # doctest: +SKIP
    """

    def __init__(self, spec=None, rho_tol=1e-6, max_outer=50,
                 scale_score_tol=1e-8, clamp_bound=15.0):
        self.spec = spec
        self.rho_tol = rho_tol
        self.max_outer = max_outer
        self.scale_score_tol = scale_score_tol
        self.clamp_bound = clamp_bound

    def _resolved_spec(self):
        if self.spec is None:
            raise ValueError("a model spec is required before fitting")
        if isinstance(self.spec, ModelSpec):
            return self.spec
        return ModelSpec.from_dict(self.spec)

    def fit(self, data, weights):
        options = ConvergenceOptions(rho_tol=self.rho_tol,
                                     max_outer=self.max_outer,
                                     scale_score_tol=self.scale_score_tol,
                                     clamp_bound=self.clamp_bound)
        self.result_ = fit_model(self._resolved_spec(), data, weights, options)
        self.rho_ = self.result_.rho
        self.beta_ = self.result_.beta
        self.alpha_ = self.result_.alpha
        self.sigma_ = self.result_.sigma
        self.converged_ = self.result_.converged
        self.n_iter_ = self.result_.iterations
        return self

    def predict(self, data=None):
        """In-sample fitted conditional mean rho*Wy + X beta.

        Out-of-sample prediction is not defined without the neighbors'
        responses, so ``data`` must be omitted.
        """
        if not hasattr(self, "result_"):
            raise ValueError("estimator is not fitted yet")
        if data is not None:
            raise ValueError("only in-sample prediction is supported: the "
                             "spatial lag requires the neighbors' responses")
        return self.result_.fitted_mean
