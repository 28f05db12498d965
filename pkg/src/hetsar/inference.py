"""Fisher information, standard errors, tests, curve bands, effective dfs.

The expected information is assembled over the parameter groups
(beta, rho, alpha); its inverse supplies every covariance used here.  The
beta-alpha cross block is structurally zero.  All functions are pure in the
fit result and safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg as sla
from scipy import stats

from .exceptions import SingularSystemError


@dataclass
class InformationMatrix:
    """Expected information over (beta, rho, alpha) and its inverse."""

    assembled: np.ndarray
    covariance: np.ndarray
    p: int                      # mean coefficients
    q: int                      # scale coefficients
    names: list

    def group_slice(self, group):
        if group == "beta":
            return slice(0, self.p)
        if group == "rho":
            return slice(self.p, self.p + 1)
        if group == "alpha":
            return slice(self.p + 1, self.p + 1 + self.q)
        raise ValueError(f"unknown parameter group {group!r}")

    def covariance_block(self, group):
        s = self.group_slice(group)
        return self.covariance[s, s]

    def se(self, group):
        return np.sqrt(np.diag(self.covariance_block(group)))


@dataclass(frozen=True)
class TestResult:
    """A single hypothesis test outcome."""

    statistic: float
    df: float
    p_value: float
    kind: str                  # wald_z | lr_chisq | f_linear


def _scale_derivative_diagonals(fit):
    """d Sigma_ii / d alpha_m under the log standard deviation link.

    Returned as an (n, q) array whose column m is the diagonal of H_m:
    sigma_i^2 changes at rate 2 sigma_i^2 x_im.
    """
    return 2.0 * fit.sigma[:, None] ** 2 * fit.design.scale.X


def fisher_information(fit, W=None):
    """Assemble the expected information of a fit and invert it.

    Parameters
    ----------
    fit : FitResult
    W : WeightMatrix, optional
        Defaults to the weights the model was fit with.

    Raises
    ------
    SingularSystemError
        If the assembled matrix cannot be inverted; the message reports its
        extreme eigenvalues.
    """
    W = W if W is not None else fit.weights
    design = fit.design
    X, Xs = design.mean.X, design.scale.X
    n = X.shape[0]
    s2 = fit.sigma**2
    w = 1.0 / s2

    A = np.eye(n) - fit.rho * W.dense
    Ainv = np.linalg.inv(A)
    B = W.dense @ Ainv

    I_bb = X.T @ (X * w[:, None]) + design.mean.penalty() + design.mean.completion()
    Bxb = B @ (X @ fit.beta)
    I_br = X.T @ (w * Bxb)
    I_rr = (float(np.sum(B * B.T))
            + float(np.sum(B**2 * np.outer(w, s2)))
            + float(Bxb @ (w * Bxb)))
    # tr(Sigma^-1 H_m W A^-1) with H_m diagonal: only diag(B) survives
    I_ra = 2.0 * (np.diag(B) @ Xs)
    I_aa = 2.0 * Xs.T @ Xs + design.scale.penalty() + design.scale.completion()

    p, q = X.shape[1], Xs.shape[1]
    M = np.zeros((p + 1 + q, p + 1 + q))
    M[:p, :p] = I_bb
    M[:p, p] = I_br
    M[p, :p] = I_br
    M[p, p] = I_rr
    M[p, p + 1:] = I_ra
    M[p + 1:, p] = I_ra
    M[p + 1:, p + 1:] = I_aa
    # beta-alpha block stays exactly zero

    try:
        cf = sla.cho_factor(M, lower=True)
        cov = sla.cho_solve(cf, np.eye(p + 1 + q))
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(M)
        raise SingularSystemError(
            "assembled information matrix is singular "
            f"(eigenvalue range [{eig[0]:.3e}, {eig[-1]:.3e}])")
    cov = 0.5 * (cov + cov.T)
    names = ([f"mean:{c}" for c in design.mean.columns] + ["rho"]
             + [f"scale:{c}" for c in design.scale.columns])
    return InformationMatrix(assembled=M, covariance=cov, p=p, q=q, names=names)


def _fisher(fit):
    if fit.fisher is None:
        fit.fisher = fisher_information(fit)
    return fit.fisher


def wald_test(estimate, null_value, se):
    """Two-sided z test of a single parameter against a null value."""
    if se <= 0:
        raise ValueError("standard error must be positive")
    z = (estimate - null_value) / se
    return TestResult(statistic=float(z), df=float("nan"),
                      p_value=float(2.0 * stats.norm.sf(abs(z))), kind="wald_z")


def lr_test(fit_null, fit_alt):
    """Likelihood-ratio test from global deviances of nested fits.

    The statistic is the deviance drop GD0 - GD1 on the unpenalized
    log-likelihood; degrees of freedom come from the effective-df difference
    (the free autoregressive parameter counts as one).
    """
    if not (fit_null.converged and fit_alt.converged):
        raise ValueError("both fits must have converged")
    if fit_null.n != fit_alt.n:
        raise ValueError("fits are not nested: different sample sizes")
    lam = fit_null.global_deviance - fit_alt.global_deviance
    if lam < -1e-6:
        raise ValueError(
            f"alternative fits worse than the null (statistic {lam:.3e}); "
            "this indicates non-convergence")
    lam = max(lam, 0.0)
    df = ((fit_alt.edf_mean + fit_alt.edf_scale + (0.0 if fit_alt.rho_fixed else 1.0))
          - (fit_null.edf_mean + fit_null.edf_scale
             + (0.0 if fit_null.rho_fixed else 1.0)))
    if df <= 1e-8:
        # degenerate comparison (identical effective complexity)
        return TestResult(statistic=lam, df=max(df, 0.0), p_value=1.0,
                          kind="lr_chisq")
    return TestResult(statistic=float(lam), df=float(df),
                      p_value=float(stats.chi2.sf(lam, df)), kind="lr_chisq")


def linear_hypothesis(fit, C, d):
    """Wald chi-square test of C beta_u = d on the unpenalized mean terms.

    ``C`` has one column per unpenalized mean coefficient (intercept first),
    or full width with zeros on all penalized columns.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    n_un = fit.design.mean.n_unpenalized
    p = fit.design.mean.p
    if C.shape[1] == p:
        if np.any(C[:, n_un:] != 0):
            raise ValueError("hypothesis matrix touches penalized (smooth) "
                             "columns; only fixed effects are testable")
        C = C[:, :n_un]
    elif C.shape[1] != n_un:
        raise ValueError(f"C must have {n_un} columns (one per unpenalized "
                         f"mean coefficient), got {C.shape[1]}")
    if d.shape != (C.shape[0],):
        raise ValueError("d must have one entry per row of C")
    rank = int(np.linalg.matrix_rank(C))
    if rank < C.shape[0]:
        raise ValueError("hypothesis matrix is rank deficient")
    V = _fisher(fit).covariance_block("beta")[:n_un, :n_un]
    gap = C @ fit.beta[:n_un] - d
    CVC = C @ V @ C.T
    try:
        stat = float(gap @ np.linalg.solve(CVC, gap))
    except np.linalg.LinAlgError:
        raise ValueError("C V C' is singular; hypothesis rows are redundant")
    return TestResult(statistic=stat, df=float(rank),
                      p_value=float(stats.chi2.sf(stat, rank)), kind="f_linear")


def smooth_ci(fit, term, grid, level=0.95, submodel="mean"):
    """Pointwise confidence band for a fitted smooth curve.

    The selector design has zeros outside the smooth's columns, so the band
    is the usual diag(X V X') normal band for the requested coefficient
    group.

    Returns
    -------
    pandas.DataFrame
        Columns ``grid``, ``estimate``, ``lower``, ``upper``.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    sub = fit.design.submodel(submodel)
    if term not in sub.smooths:
        raise ValueError(f"{term!r} is not a smooth term of the {submodel} "
                         "submodel")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    selector = np.zeros((grid.size, sub.p))
    selector[:, sub.term_cols[term]] = sub.smooths[term].basis_at(grid)
    coef = fit.beta if submodel == "mean" else fit.alpha
    group = "beta" if submodel == "mean" else "alpha"
    V = _fisher(fit).covariance_block(group)
    estimate = selector @ coef
    variance = np.einsum("ij,jk,ik->i", selector, V, selector)
    half = stats.norm.ppf(0.5 + level / 2.0) * np.sqrt(np.maximum(variance, 0.0))
    return pd.DataFrame({"grid": grid, "estimate": estimate,
                         "lower": estimate - half, "upper": estimate + half})


def _marginal_block_edf(basis_uncentered, weight, psi, G):
    M = basis_uncentered.T @ (basis_uncentered * weight[:, None])
    cf = sla.cho_factor(M + psi * G, lower=True)
    return float(np.trace(sla.cho_solve(cf, M)))


def effective_dfs(fit):
    """Effective degrees of freedom of the mean and scale submodels.

    Unpenalized columns count one each; every smooth block contributes the
    trace of its own penalized smoother, computed on the uncentered basis so
    the block spans its full null space (for an order-2 penalty the block df
    falls to 2 as psi grows and equals the basis size at psi = 0).

    Returns
    -------
    (df_mean, df_scale, df_err)
        With ``df_err = n - df_mean - df_scale``.
    """
    design = fit.design
    w_mean = 1.0 / fit.sigma**2
    w_scale = np.full(fit.n, 2.0)
    df_mean = float(design.mean.n_unpenalized)
    for blk in design.mean.blocks:
        term = design.mean.smooths[blk.term]
        df_mean += _marginal_block_edf(term.basis + term.offsets, w_mean,
                                       blk.psi, blk.matrix)
    df_scale = float(design.scale.n_unpenalized)
    for blk in design.scale.blocks:
        term = design.scale.smooths[blk.term]
        df_scale += _marginal_block_edf(term.basis + term.offsets, w_scale,
                                        blk.psi, blk.matrix)
    return df_mean, df_scale, float(fit.n) - df_mean - df_scale
