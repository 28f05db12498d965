"""Marginal-effect decomposition and spatial autocorrelation diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

IMPACTS_MAX_N = 2000


@dataclass(frozen=True)
class ImpactSummary:
    """Average direct, indirect (spillover) and total effect of one regressor."""

    variable: str
    coefficient: float
    direct: float
    indirect: float
    total: float


@dataclass(frozen=True)
class MoranResult:
    """Moran's I with its permutation p-value and scatter pairs."""

    statistic: float
    expected: float
    p_value: float
    permutations: int
    scatter: np.ndarray        # columns: centered value, spatial lag


def impact_summary(rho, coefficient, W, variable):
    """Impacts from the partial-derivative matrix beta_k (I - rho W)^-1.

    The direct effect averages the diagonal, the indirect effect averages
    the off-diagonal row sums, and the total effect is their sum.  For a
    row-stochastic W the total equals beta_k / (1 - rho) exactly.
    """
    n = W.n
    if n > IMPACTS_MAX_N:
        raise ValueError(f"impacts supported up to n={IMPACTS_MAX_N} "
                         f"(dense inverse); got n={n}")
    inv = np.linalg.inv(np.eye(n) - rho * W.dense)
    direct = coefficient * float(np.trace(inv)) / n
    indirect = coefficient * float(inv.sum() - np.trace(inv)) / n
    return ImpactSummary(variable=variable, coefficient=float(coefficient),
                         direct=direct, indirect=indirect,
                         total=direct + indirect)


def impacts(fit, W, variable):
    """Impact decomposition of an unpenalized linear mean term.

    Smooth terms and scale-model terms are rejected: the decomposition is
    only defined for coefficients that enter the mean linearly.
    """
    sub = fit.design.mean
    if variable in sub.smooths:
        raise ValueError(f"{variable!r} is a smooth term; impact "
                         "decomposition is only supported for linear terms")
    cols = sub.term_cols.get(variable)
    if cols is None or cols.start >= sub.n_unpenalized:
        raise ValueError(f"{variable!r} is not an unpenalized linear term of "
                         "the mean submodel")
    return impact_summary(fit.rho, fit.beta[cols.start], W, variable)


def _validate_moran_inputs(values, W, permutations):
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size != W.n:
        raise ValueError("values must be a vector matching the weight matrix")
    if values.size < 3:
        raise ValueError("Moran's I needs at least 3 observations")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    if np.ptp(values) == 0:
        raise ValueError("values are constant; Moran's I is undefined")
    if permutations < 99:
        raise ValueError("at least 99 permutations are required")
    return values


def morans_i(values, W, permutations=999, seed=0):
    """Global Moran's I with a one-sided (greater) permutation test.

    The statistic is (n / S0) * z'Wz / z'z with z the centered values and
    S0 the total weight.  Each permutation draws from its own substream of
    the seed so the p-value is reproducible and order-independent.
    """
    values = _validate_moran_inputs(values, W, permutations)
    n = values.size
    z = values - values.mean()
    denom = float(z @ z)
    s0 = float(W.entries.sum())
    lag = W.lag(z)
    observed = (n / s0) * float(z @ lag) / denom

    streams = np.random.SeedSequence(seed).spawn(permutations)
    at_least = 1
    for stream in streams:
        zp = z[np.random.default_rng(stream).permutation(n)]
        stat = (n / s0) * float(zp @ W.lag(zp)) / denom
        if stat >= observed:
            at_least += 1
    p_value = at_least / (permutations + 1)
    return MoranResult(statistic=observed, expected=-1.0 / (n - 1),
                       p_value=p_value, permutations=permutations,
                       scatter=np.column_stack([z, lag]))


def moran_scatter(values, W):
    """Centered values and their spatial lags for a Moran plot.

    For row-stochastic W the least-squares slope of lag on value equals
    Moran's I.
    """
    values = _validate_moran_inputs(values, W, permutations=99)
    z = values - values.mean()
    return pd.DataFrame({"value": z, "lag": W.lag(z)})
